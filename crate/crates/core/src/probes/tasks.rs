use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::features::{unit, FeatureSet, ProbeFeatures};
use super::mlp::{MlpClassifier, MlpConfig};
use super::regression::{cross_validate_logistic, ridge_fit_predict, CvErrors, LOGISTIC_C, RIDGE_ALPHA};
use super::report::{ProbeReport, ProbeRow};
use super::stats::{bootstrap_pearson, cosine_similarity, levenshtein_similarity, zscore_columns, Bootstrap};
use crate::error::{dim_err, Error, Result};
use crate::rng::substream;

pub const MIN_LENGTH_ITEMS: usize = 10;
pub const BOOTSTRAP_ITERATIONS: usize = 10_000;
pub const HOMONYM_FOLDS: usize = 10;
/// Both homonym forms must occur more often than this.
pub const HOMONYM_MIN_COUNT: usize = 20;
/// The more frequent form must stay below this share of occurrences.
pub const HOMONYM_MAX_SHARE: f64 = 0.95;

fn layer_count(feats: &[&ProbeFeatures]) -> Result<usize> {
    let k = feats.first().map_or(0, |f| f.avg_layers.len());
    if let Some(f) = feats.iter().find(|f| f.avg_layers.len() != k) {
        return Err(dim_err("probe layers", &[k], &[f.avg_layers.len()]));
    }
    Ok(k)
}

/// Seeded 80/20 split of `0..n` into disjoint train and test indices.
pub fn split_80_20<R: Rng>(n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let cut = (n * 4).div_ceil(5).min(n.saturating_sub(1));
    let test = idx.split_off(cut);
    (idx, test)
}

fn row(task: &str, set: FeatureSet, layers: usize, metric: &str, value: f64, ci: Option<(f64, f64)>) -> ProbeRow {
    ProbeRow {
        task: task.into(),
        feature_set: set.to_string(),
        layer: set.axis(layers),
        metric: metric.into(),
        value,
        ci,
    }
}

/// Ridge regression from each feature set to utterance length, reporting
/// held-out R².
pub fn probe_length(feats: &[&ProbeFeatures], lengths: &[f64], seed: u64) -> Result<ProbeReport> {
    if feats.len() != lengths.len() {
        return Err(dim_err("probe_length", &[feats.len()], &[lengths.len()]));
    }
    if feats.len() < MIN_LENGTH_ITEMS {
        return Err(Error::InsufficientData(format!(
            "length probe needs at least {MIN_LENGTH_ITEMS} utterances, got {}",
            feats.len()
        )));
    }
    let layers = layer_count(feats)?;
    let (train, test) = split_80_20(feats.len(), &mut substream(seed, "probe.length"));
    let mut report = ProbeReport::new();
    let mut sets = FeatureSet::standard(layers);
    sets.push(FeatureSet::Timesteps);
    for set in sets {
        let x = set.matrix(feats)?;
        let pick = |ids: &[usize]| ids.iter().map(|&i| x[i].clone()).collect::<Vec<_>>();
        let ys = |ids: &[usize]| ids.iter().map(|&i| lengths[i]).collect::<Vec<_>>();
        let fit = ridge_fit_predict(&pick(&train), &ys(&train), &pick(&test), Some(&ys(&test)), RIDGE_ALPHA)?;
        report.push(row("length", set, layers, "r2", fit.r2.unwrap_or(0.0), None))?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PresenceInstance {
    pub utterance: usize,
    pub word: String,
    pub present: bool,
}

/// One positive and one negative target per utterance. The positive is a
/// random content word of the utterance; negatives reuse the positive of
/// another utterance that does not contain it.
pub fn presence_instances<R: Rng>(
    utterance_words: &[Vec<String>],
    candidate: impl Fn(&str) -> bool,
    rng: &mut R,
) -> Result<Vec<PresenceInstance>> {
    let mut positives: Vec<(usize, String)> = Vec::new();
    for (i, words) in utterance_words.iter().enumerate() {
        let content: Vec<&String> = words.iter().filter(|w| candidate(w)).collect();
        if let Some(w) = content.choose(rng) {
            positives.push((i, (*w).clone()));
        }
    }
    positives.shuffle(rng);
    let m = positives.len();
    let mut out = Vec::with_capacity(2 * m);
    for (k, (i, word)) in positives.iter().enumerate() {
        let negative = (1..m)
            .map(|off| &positives[(k + off) % m].1)
            .find(|w| !utterance_words[*i].contains(w))
            .ok_or_else(|| {
                Error::InsufficientData(format!("no negative target available for utterance {i}"))
            })?;
        out.push(PresenceInstance {
            utterance: *i,
            word: word.clone(),
            present: true,
        });
        out.push(PresenceInstance {
            utterance: *i,
            word: negative.clone(),
            present: false,
        });
    }
    Ok(out)
}

/// Word-presence classification from `[utterance feature ‖ word vector]`,
/// reporting held-out accuracy per feature set. The 80/20 split is by
/// utterance.
pub fn probe_word_presence(
    feats: &[&ProbeFeatures],
    utterance_words: &[Vec<String>],
    word_vectors: &IndexMap<String, Vec<f64>>,
    stopwords: &[&str],
    cfg: &MlpConfig,
    seed: u64,
) -> Result<ProbeReport> {
    if feats.len() != utterance_words.len() {
        return Err(dim_err("probe_word_presence", &[feats.len()], &[utterance_words.len()]));
    }
    let layers = layer_count(feats)?;
    let stop: HashSet<&str> = stopwords.iter().copied().collect();
    let mut rng = substream(seed, "probe.wordpresence");
    let instances = presence_instances(
        utterance_words,
        |w| !stop.contains(w) && word_vectors.contains_key(w),
        &mut rng,
    )?;
    let (train_utts, _) = split_80_20(feats.len(), &mut rng);
    let train_set: HashSet<usize> = train_utts.into_iter().collect();
    let (train, test): (Vec<&PresenceInstance>, Vec<&PresenceInstance>) =
        instances.iter().partition(|p| train_set.contains(&p.utterance));
    if train.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData("word presence split leaves an empty side".into()));
    }
    let mut report = ProbeReport::new();
    for set in FeatureSet::standard(layers) {
        let build = |items: &[&PresenceInstance]| -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
            let mut xs = Vec::with_capacity(items.len());
            for p in items {
                let mut x = set.vector(feats[p.utterance])?;
                x.extend_from_slice(&word_vectors[&p.word]);
                xs.push(x);
            }
            Ok((xs, items.iter().map(|p| p.present).collect()))
        };
        let (xtr, ytr) = build(&train)?;
        let (xte, yte) = build(&test)?;
        let mut mrng = substream(seed, &format!("probe.wordpresence.{set}"));
        let clf = MlpClassifier::fit(&xtr, &ytr, cfg, &mut mrng)?;
        report.push(row("wordpresence", set, layers, "accuracy", clf.accuracy(&xte, &yte)?, None))?;
    }
    Ok(report)
}

/// Rated sentence pairs over a list of items.
#[derive(Clone, Copy, Debug)]
pub struct SimilarityData<'a> {
    /// Indices into the item lists.
    pub pairs: &'a [(usize, usize)],
    pub ratings: &'a [f64],
    /// Transcript of each item.
    pub sentences: &'a [String],
    /// Text-model embedding of each item.
    pub text_embeddings: Option<&'a [Vec<f64>]>,
}

/// Cosine similarity of every pair after z-scoring each dimension over
/// all items.
pub fn pair_cosines(vectors: &[Vec<f64>], pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    let z = zscore_columns(vectors);
    pairs
        .iter()
        .map(|&(a, b)| match (z.get(a), z.get(b)) {
            (Some(x), Some(y)) => Ok(cosine_similarity(x, y)),
            _ => Err(Error::OutOfRange {
                index: a.max(b),
                len: z.len(),
            }),
        })
        .collect()
}

/// Bootstrapped Pearson correlations between the pair cosines of `vectors`
/// and the human ratings, the text-model cosines and the edit similarity.
pub fn similarity_correlations(
    vectors: &[Vec<f64>],
    data: &SimilarityData<'_>,
    iterations: usize,
    seed: u64,
    label: &str,
) -> Result<Vec<(&'static str, Bootstrap)>> {
    if data.ratings.len() != data.pairs.len() {
        return Err(dim_err("similarity ratings", &[data.pairs.len()], &[data.ratings.len()]));
    }
    let cos = pair_cosines(vectors, data.pairs)?;
    let mut targets: Vec<(&'static str, Vec<f64>)> = vec![("r_human", data.ratings.to_vec())];
    if let Some(text) = data.text_embeddings {
        targets.push(("r_text", pair_cosines(text, data.pairs)?));
    }
    let edit = data
        .pairs
        .iter()
        .map(|&(a, b)| match (data.sentences.get(a), data.sentences.get(b)) {
            (Some(x), Some(y)) => Ok(levenshtein_similarity(x, y)),
            _ => Err(Error::OutOfRange {
                index: a.max(b),
                len: data.sentences.len(),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    targets.push(("r_edit", edit));
    targets
        .into_iter()
        .map(|(name, t)| {
            let mut rng = substream(seed, &format!("probe.similarity.{label}.{name}"));
            Ok((name, bootstrap_pearson(&cos, &t, iterations, &mut rng)?))
        })
        .collect()
}

pub fn probe_similarity(
    feats: &[&ProbeFeatures],
    data: &SimilarityData<'_>,
    iterations: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let layers = layer_count(feats)?;
    let mut report = ProbeReport::new();
    for set in FeatureSet::standard(layers) {
        let x = set.matrix(feats)?;
        for (metric, b) in similarity_correlations(&x, data, iterations, seed, &set.to_string())? {
            report.push(row("similarity", set, layers, metric, b.estimate, Some((b.ci_low, b.ci_high))))?;
        }
    }
    Ok(report)
}

/// Spelling pairs that share a pronunciation and pass the frequency,
/// stopword and variant-spelling filters. Each pair is ordered
/// alphabetically; pairs are sorted.
pub fn mine_homonyms(
    lexicon: &IndexMap<String, String>,
    counts: &IndexMap<String, usize>,
    stopwords: &[&str],
    exclusions: &[(&str, &str)],
) -> Vec<(String, String)> {
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (word, pron) in lexicon {
        groups.entry(pron.as_str()).or_default().push(word.as_str());
    }
    let excluded = |a: &str, b: &str| exclusions.iter().any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b));
    let count = |w: &str| counts.get(w).copied().unwrap_or(0);
    let mut out = Vec::new();
    for words in groups.values_mut() {
        words.sort_unstable();
        words.dedup();
        for (i, &a) in words.iter().enumerate() {
            for &b in &words[i + 1..] {
                let (ca, cb) = (count(a), count(b));
                let ok = ca > HOMONYM_MIN_COUNT
                    && cb > HOMONYM_MIN_COUNT
                    && !excluded(a, b)
                    && !stopwords.contains(&a)
                    && !stopwords.contains(&b)
                    && (ca.max(cb) as f64) < HOMONYM_MAX_SHARE * (ca + cb) as f64;
                if ok {
                    out.push((a.to_string(), b.to_string()));
                }
            }
        }
    }
    out.sort();
    out
}

/// Utterances containing exactly one of the two forms, labelled `true`
/// for the second form.
pub fn homonym_items(pair: &(String, String), utterance_words: &[Vec<String>]) -> Vec<(usize, bool)> {
    utterance_words
        .iter()
        .enumerate()
        .filter_map(|(i, w)| match (w.contains(&pair.0), w.contains(&pair.1)) {
            (true, false) => Some((i, false)),
            (false, true) => Some((i, true)),
            _ => None,
        })
        .collect()
}

/// Cross-validated logistic regression error against the majority baseline
/// on unit-normalized features.
pub fn homonym_errors(x: &[Vec<f64>], labels: &[bool], seed: u64, label: &str) -> Result<CvErrors> {
    let x = x.iter().map(|v| unit(v)).collect::<Result<Vec<_>>>()?;
    let mut rng = substream(seed, &format!("probe.homonym.{label}"));
    cross_validate_logistic(&x, labels, HOMONYM_FOLDS, LOGISTIC_C, &mut rng)
}

/// Relative error reduction per homonym pair and feature set.
pub fn probe_homonyms(
    pairs: &[(String, String)],
    feats: &[&ProbeFeatures],
    utterance_words: &[Vec<String>],
    seed: u64,
) -> Result<ProbeReport> {
    if feats.len() != utterance_words.len() {
        return Err(dim_err("probe_homonyms", &[feats.len()], &[utterance_words.len()]));
    }
    let layers = layer_count(feats)?;
    let mut report = ProbeReport::new();
    for pair in pairs {
        let items = homonym_items(pair, utterance_words);
        let labels: Vec<bool> = items.iter().map(|&(_, l)| l).collect();
        for set in FeatureSet::standard(layers) {
            let x = items
                .iter()
                .map(|&(i, _)| set.vector(feats[i]))
                .collect::<Result<Vec<_>>>()?;
            let name = format!("{}/{}", pair.0, pair.1);
            let err = homonym_errors(&x, &labels, seed, &format!("{name}.{set}"))?;
            report.push(row(&format!("homonym:{name}"), set, layers, "rer", err.rer(), None))?;
        }
    }
    Ok(report)
}
