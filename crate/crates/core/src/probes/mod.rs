//! Diagnostic classifiers trained on frozen encoder representations.

mod features;
mod mlp;
mod regression;
mod report;
mod stats;
mod stopwords;
mod tasks;

pub use features::{extract_probe_features, FeatureSet, ProbeFeatures};
pub use mlp::{MlpClassifier, MlpConfig};
pub use regression::{
    cross_validate_logistic, fit_logistic, r_squared, ridge_fit_predict, stratified_folds, CvErrors, LogisticModel,
    RidgeFit, LOGISTIC_C, RIDGE_ALPHA,
};
pub use report::{ProbeReport, ProbeRow, REPORT_HEADER};
pub use stats::{
    bootstrap_pearson, cosine_similarity, levenshtein, levenshtein_similarity, pearson_r, zscore_columns, Bootstrap,
};
pub use stopwords::{STOPWORDS, VARIANT_SPELLINGS};
pub use tasks::{
    homonym_errors, homonym_items, mine_homonyms, pair_cosines, presence_instances, probe_homonyms, probe_length,
    probe_similarity, probe_word_presence, similarity_correlations, split_80_20, PresenceInstance, SimilarityData,
    BOOTSTRAP_ITERATIONS, HOMONYM_FOLDS, HOMONYM_MAX_SHARE, HOMONYM_MIN_COUNT, MIN_LENGTH_ITEMS,
};

pub fn default_stopwords() -> &'static [&'static str] {
    STOPWORDS
}
