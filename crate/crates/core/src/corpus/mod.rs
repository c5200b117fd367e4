//! Manifests, the synthetic corpus generator and activation archives.

mod archive;
mod manifest;
mod synth;

pub use archive::{
    archive_container, collect_probe_features, dump_activations, load_activations, parse_archive,
};
pub use manifest::{
    format_manifest, load_manifest, parse_manifest, resolve, save_manifest, ContainerCache, EntryRef,
    ManifestRecord, Source, Split,
};
pub use synth::{
    generate_synthetic, SimilarityPair, SynthConfig, SynthUtterance, SyntheticCorpus, COUNTS_FILE, FUNCTION_WORDS,
    HOMONYMS_FILE, IMAGES_FILE, LEXICON_FILE, MANIFEST_FILE, SIMILARITY_FILE,
};

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rayon::prelude::*;

use crate::audiofeat::{featurize, read_wav, FeatureMatrix};
use crate::error::{Error, Result};
use crate::model::{Utterance, Vocabulary};
use crate::numcore::{Container, Tensor};

/// An utterance paired with its image, ready for the encoders.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image_id: String,
    pub words: Vec<String>,
    pub utterance: Utterance,
    pub image: Vec<f32>,
}

/// How manifest records become encoder inputs.
#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    pub with_deltas: bool,
    pub truncate_ms: Option<u32>,
    /// Feature archive keyed by utterance id; overrides record sources.
    pub features: Option<PathBuf>,
    /// Text model vocabulary; transcripts are encoded instead of audio.
    pub vocabulary: Option<Vocabulary>,
}

fn features_from_tensor(t: &Tensor<f32>) -> Result<FeatureMatrix> {
    FeatureMatrix::new(t.clone())
}

/// Acoustic features of every record: archive entries when available,
/// otherwise computed from audio.
pub fn featurize_records(manifest_dir: &Path, records: &[ManifestRecord], opts: &LoadOptions) -> Result<Vec<FeatureMatrix>> {
    let archive = opts.features.as_ref().map(Container::load).transpose()?;
    let mut cache = ContainerCache::default();
    // container lookups are sequential; audio decoding runs in parallel
    let stored: Vec<Option<FeatureMatrix>> = records
        .iter()
        .map(|r| {
            if let Some(c) = &archive {
                let t = c
                    .get(&r.utt_id)
                    .ok_or_else(|| Error::MissingResource(format!("features for {}", r.utt_id)))?;
                return features_from_tensor(t).map(Some);
            }
            match &r.source {
                Source::Features(e) => features_from_tensor(cache.get(manifest_dir, e)?).map(Some),
                Source::Audio(_) => Ok(None),
            }
        })
        .collect::<Result<_>>()?;
    records
        .par_iter()
        .zip(stored)
        .map(|(r, s)| match (s, &r.source) {
            (Some(f), _) => Ok(f),
            (None, Source::Audio(p)) => {
                let sig = read_wav(resolve(manifest_dir, p))?;
                featurize(&sig, opts.with_deltas, opts.truncate_ms)
            }
            (None, Source::Features(_)) => unreachable!("resolved above"),
        })
        .collect()
}

/// Feature archive keyed by utterance id.
pub fn feature_archive(records: &[ManifestRecord], features: &[FeatureMatrix]) -> Container {
    records
        .iter()
        .zip(features)
        .map(|(r, f)| (r.utt_id.clone(), f.tensor().clone()))
        .collect()
}

/// Builds encoder-ready samples for `records`.
pub fn load_samples(manifest_path: impl AsRef<Path>, records: &[ManifestRecord], opts: &LoadOptions) -> Result<Vec<Sample>> {
    let dir = manifest_path.as_ref().parent().unwrap_or(Path::new(".")).to_path_buf();
    let utterances: Vec<Utterance> = match &opts.vocabulary {
        Some(v) => records.iter().map(|r| Utterance::Text(v.encode(&r.transcript))).collect(),
        None => featurize_records(&dir, records, opts)?
            .into_iter()
            .map(Utterance::Speech)
            .collect(),
    };
    let mut cache = ContainerCache::default();
    records
        .iter()
        .zip(utterances)
        .map(|(r, utterance)| {
            Ok(Sample {
                id: r.utt_id.clone(),
                image_id: r.image_id.clone(),
                words: r.transcript.clone(),
                utterance,
                image: cache.get(&dir, &r.image_ref)?.data().to_vec(),
            })
        })
        .collect()
}

/// Records of one split.
pub fn split_records(records: &[ManifestRecord], split: Split) -> Vec<ManifestRecord> {
    records.iter().filter(|r| r.split == split).cloned().collect()
}

/// Reads a two-column `key<TAB>value` table.
pub fn read_table(path: impl AsRef<Path>) -> Result<IndexMap<String, String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::MissingResource(format!("{}: {e}", path.display())))?;
    let mut out = IndexMap::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg: "expected two tab-separated fields".into(),
        })?;
        out.insert(a.to_string(), b.to_string());
    }
    Ok(out)
}

/// Reads `utt_a<TAB>utt_b<TAB>rating` lines.
pub fn read_similarity(path: impl AsRef<Path>) -> Result<Vec<SimilarityPair>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::MissingResource(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(k, line)| {
            let err = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                msg: msg.into(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(err("expected 3 tab-separated fields"));
            }
            Ok(SimilarityPair {
                a: f[0].into(),
                b: f[1].into(),
                rating: f[2].parse().map_err(|_| err("rating is not a number"))?,
            })
        })
        .collect()
}
