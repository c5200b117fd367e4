/// English function words used when picking word targets and mining homonyms.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "across", "after", "again", "against", "all", "almost", "along", "also", "although",
    "am", "among", "an", "and", "another", "any", "are", "around", "as", "at", "be", "because", "been", "before",
    "behind", "being", "below", "beneath", "beside", "besides", "between", "beyond", "both", "but", "by", "can",
    "could", "did", "do", "does", "doing", "down", "during", "each", "either", "enough", "even", "ever", "every",
    "few", "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself", "him",
    "himself", "his", "how", "however", "i", "if", "in", "inside", "into", "is", "it", "its", "itself", "just",
    "least", "less", "many", "may", "me", "might", "more", "most", "much", "must", "my", "myself", "near", "neither",
    "no", "nor", "not", "of", "off", "on", "once", "one", "only", "onto", "or", "other", "others", "ought", "our",
    "ours", "ourselves", "out", "outside", "over", "own", "per", "same", "shall", "she", "should", "since", "so",
    "some", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there", "these", "they",
    "this", "those", "though", "through", "throughout", "thus", "till", "to", "too", "toward", "towards", "two",
    "under", "underneath", "unless", "until", "up", "upon", "us", "very", "via", "was", "we", "were", "what",
    "whatever", "when", "where", "whether", "which", "while", "who", "whom", "whose", "why", "will", "with",
    "within", "without", "would", "yet", "you", "your", "yours", "yourself", "yourselves",
];

/// Variant spellings that share a pronunciation without differing in meaning.
pub const VARIANT_SPELLINGS: &[(&str, &str)] = &[
    ("theater", "theatre"),
    ("center", "centre"),
    ("color", "colour"),
    ("colors", "colours"),
    ("colorful", "colourful"),
    ("gray", "grey"),
    ("donut", "doughnut"),
    ("donuts", "doughnuts"),
    ("tire", "tyre"),
    ("tires", "tyres"),
    ("meter", "metre"),
    ("catalog", "catalogue"),
    ("favorite", "favourite"),
    ("neighbor", "neighbour"),
    ("harbor", "harbour"),
    ("jewelry", "jewellery"),
    ("pajamas", "pyjamas"),
    ("skeptical", "sceptical"),
    ("ax", "axe"),
    ("okay", "ok"),
];
