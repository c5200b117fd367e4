use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::SynthConfig;
use crate::error::{Error, Result};
use crate::model::Preset;
use crate::probes::{MlpConfig, BOOTSTRAP_ITERATIONS};
use crate::training::{TrainConfig, DEFAULT_MARGIN};

/// Flickr8K utterances are cut at this length.
pub const FLICKR_TRUNCATE_MS: u32 = 10_000;

/// Effective settings of one run: preset defaults, then the config file,
/// then command-line flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub manifest: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub task: String,
    pub margin: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub clip_norm: Option<f64>,
    pub with_deltas: bool,
    pub truncate_ms: Option<u32>,
    pub train_split: String,
    pub val_split: String,
    pub eval_split: String,
    pub probe_split: String,
    pub activations: Option<PathBuf>,
    pub text_checkpoint: Option<PathBuf>,
    pub word_audio: Option<PathBuf>,
    pub bootstrap: usize,
    pub mlp_hidden: usize,
    pub mlp_epochs: usize,
    pub synth: SynthConfig,
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "preset",
    "seed",
    "manifest",
    "features",
    "checkpoint",
    "out",
    "task",
    "margin",
    "lr",
    "batch",
    "epochs",
    "clip_norm",
    "with_deltas",
    "truncate_ms",
    "train_split",
    "val_split",
    "eval_split",
    "probe_split",
    "activations",
    "text_checkpoint",
    "word_audio",
    "bootstrap",
    "mlp_hidden",
    "mlp_epochs",
    "n_utterances",
    "vocab_size",
    "homonym_pairs",
    "homonym_count_a",
    "homonym_count_b",
    "min_words",
    "max_words",
    "image_dim",
    "noise",
    "val_fraction",
    "test_fraction",
    "similarity_pairs",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

impl RunConfig {
    pub fn for_preset(preset: Preset) -> Self {
        let train = TrainConfig::for_preset(preset);
        let mlp = MlpConfig::default();
        Self {
            preset,
            seed: 0,
            manifest: None,
            features: None,
            checkpoint: None,
            out: None,
            task: "all".into(),
            margin: DEFAULT_MARGIN,
            lr: train.learning_rate,
            batch: train.batch_size,
            epochs: train.max_epochs,
            clip_norm: train.clip_norm,
            with_deltas: preset.uses_deltas(),
            truncate_ms: preset.uses_deltas().then_some(FLICKR_TRUNCATE_MS),
            train_split: "train".into(),
            val_split: "val".into(),
            eval_split: "test".into(),
            probe_split: "val".into(),
            activations: None,
            text_checkpoint: None,
            word_audio: None,
            bootstrap: BOOTSTRAP_ITERATIONS,
            mlp_hidden: mlp.hidden,
            mlp_epochs: mlp.max_epochs,
            synth: SynthConfig::default(),
        }
    }

    /// Sets one key. `preset` can only be chosen before the others.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let path = || (value != "none").then(|| PathBuf::from(value));
        match key {
            "preset" => {
                let p: Preset = value.parse()?;
                if p != self.preset {
                    return Err(Error::Config("preset must be set before other keys".into()));
                }
            }
            "seed" => self.seed = parse(key, value)?,
            "manifest" => self.manifest = path(),
            "features" => self.features = path(),
            "checkpoint" => self.checkpoint = path(),
            "out" => self.out = path(),
            "task" => self.task = value.into(),
            "margin" => self.margin = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "clip_norm" => self.clip_norm = optional(key, value)?,
            "with_deltas" => self.with_deltas = parse(key, value)?,
            "truncate_ms" => self.truncate_ms = optional(key, value)?,
            "train_split" => self.train_split = value.into(),
            "val_split" => self.val_split = value.into(),
            "eval_split" => self.eval_split = value.into(),
            "probe_split" => self.probe_split = value.into(),
            "activations" => self.activations = path(),
            "text_checkpoint" => self.text_checkpoint = path(),
            "word_audio" => self.word_audio = path(),
            "bootstrap" => self.bootstrap = parse(key, value)?,
            "mlp_hidden" => self.mlp_hidden = parse(key, value)?,
            "mlp_epochs" => self.mlp_epochs = parse(key, value)?,
            "n_utterances" => self.synth.n_utterances = parse(key, value)?,
            "vocab_size" => self.synth.vocab_size = parse(key, value)?,
            "homonym_pairs" => self.synth.homonym_pairs = parse(key, value)?,
            "homonym_count_a" => self.synth.homonym_counts.0 = parse(key, value)?,
            "homonym_count_b" => self.synth.homonym_counts.1 = parse(key, value)?,
            "min_words" => self.synth.min_words = parse(key, value)?,
            "max_words" => self.synth.max_words = parse(key, value)?,
            "image_dim" => self.synth.image_dim = parse(key, value)?,
            "noise" => self.synth.noise = parse(key, value)?,
            "val_fraction" => self.synth.val_fraction = parse(key, value)?,
            "test_fraction" => self.synth.test_fraction = parse(key, value)?,
            "similarity_pairs" => self.synth.similarity_pairs = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.synth;
        Some(match key {
            "preset" => self.preset.to_string(),
            "seed" => self.seed.to_string(),
            "manifest" => show_path(&self.manifest),
            "features" => show_path(&self.features),
            "checkpoint" => show_path(&self.checkpoint),
            "out" => show_path(&self.out),
            "task" => self.task.clone(),
            "margin" => self.margin.to_string(),
            "lr" => self.lr.to_string(),
            "batch" => self.batch.to_string(),
            "epochs" => self.epochs.to_string(),
            "clip_norm" => show(&self.clip_norm),
            "with_deltas" => self.with_deltas.to_string(),
            "truncate_ms" => show(&self.truncate_ms),
            "train_split" => self.train_split.clone(),
            "val_split" => self.val_split.clone(),
            "eval_split" => self.eval_split.clone(),
            "probe_split" => self.probe_split.clone(),
            "activations" => show_path(&self.activations),
            "text_checkpoint" => show_path(&self.text_checkpoint),
            "word_audio" => show_path(&self.word_audio),
            "bootstrap" => self.bootstrap.to_string(),
            "mlp_hidden" => self.mlp_hidden.to_string(),
            "mlp_epochs" => self.mlp_epochs.to_string(),
            "n_utterances" => s.n_utterances.to_string(),
            "vocab_size" => s.vocab_size.to_string(),
            "homonym_pairs" => s.homonym_pairs.to_string(),
            "homonym_count_a" => s.homonym_counts.0.to_string(),
            "homonym_count_b" => s.homonym_counts.1.to_string(),
            "min_words" => s.min_words.to_string(),
            "max_words" => s.max_words.to_string(),
            "image_dim" => s.image_dim.to_string(),
            "noise" => s.noise.to_string(),
            "val_fraction" => s.val_fraction.to_string(),
            "test_fraction" => s.test_fraction.to_string(),
            "similarity_pairs" => s.similarity_pairs.to_string(),
            _ => return None,
        })
    }

    /// Every effective value as `key=value`, one per line.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter()
            .map(|&k| (k, self.get(k).expect("every listed key has a value")))
            .collect()
    }

    /// Merges preset defaults, `file` entries and `flags`, later sources
    /// winning. `flags` may include `preset`.
    pub fn resolve(file: &[(String, String)], flags: &[(&str, String)]) -> Result<Self> {
        let pick = |src: &mut dyn Iterator<Item = (&str, &str)>| src.filter(|(k, _)| *k == "preset").last().map(|(_, v)| v.to_string());
        let preset = pick(&mut flags.iter().map(|(k, v)| (*k, v.as_str())))
            .or_else(|| pick(&mut file.iter().map(|(k, v)| (k.as_str(), v.as_str()))))
            .map(|p| p.parse::<Preset>())
            .transpose()?
            .unwrap_or(Preset::CocoSpeech);
        let mut cfg = Self::for_preset(preset);
        for (k, v) in file {
            cfg.set(k, v)?;
        }
        for (k, v) in flags {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = TrainConfig::for_preset(self.preset);
        t.learning_rate = self.lr;
        t.batch_size = self.batch;
        t.max_epochs = self.epochs;
        t.seed = self.seed;
        t.loss.margin = self.margin;
        t.clip_norm = self.clip_norm;
        t
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn mlp_config(&self) -> MlpConfig {
        MlpConfig {
            hidden: self.mlp_hidden,
            max_epochs: self.mlp_epochs,
            ..MlpConfig::default()
        }
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("--{key} is required for this command")))
    }
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_config_file(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: "expected key = value".into(),
        })?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("unknown configuration key {k:?}"),
            });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn load_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::MissingResource(format!("{}: {e}", path.display())))?;
    parse_config_file(&text, path)
}
