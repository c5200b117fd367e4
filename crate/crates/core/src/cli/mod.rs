//! Command-line pipeline: corpus synthesis, featurization, training,
//! evaluation, activation dumps and probes.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{run, vocabulary_path, CHECKPOINT_FILE, LOG_FILE, RANKS_FILE, RETRIEVAL_FILE};
pub use config::{load_config_file, parse_config_file, RunConfig, FLICKR_TRUNCATE_MS, KEYS};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "groundspeech", version, about = "Visually grounded speech models and probes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Hyperparameter preset (flickr8k-speech, coco-speech, flickr8k-text, coco-text, micro).
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// File of `key = value` settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Acoustic feature archive keyed by utterance id.
    #[arg(long, global = true)]
    pub features: Option<PathBuf>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Probe task: length, wordpresence, similarity, homonym or all.
    #[arg(long, global = true)]
    pub task: Option<String>,
    #[arg(long, global = true)]
    pub margin: Option<f64>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Extra `key=value` setting; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus to --out.
    Synth,
    /// Compute acoustic features for every manifest record.
    Featurize,
    /// Train a model; writes a checkpoint and log under --out.
    Train,
    /// Retrieval recall and median rank on the evaluation split.
    Evaluate,
    /// Store probe features of every manifest record.
    DumpActivations,
    /// Run probe tasks and write a report.
    Probe,
}

impl Cli {
    /// Flag values as configuration entries.
    pub fn flag_entries(&self) -> Result<Vec<(&'static str, String)>> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut out: Vec<(&'static str, String)> = [
            ("preset", self.preset.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("manifest", path(&self.manifest)),
            ("features", path(&self.features)),
            ("checkpoint", path(&self.checkpoint)),
            ("out", path(&self.out)),
            ("task", self.task.clone()),
            ("margin", self.margin.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("batch", self.batch.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| crate::Error::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            let key = KEYS
                .iter()
                .find(|&&known| known == k.trim())
                .ok_or_else(|| crate::Error::Config(format!("unknown configuration key {:?}", k.trim())))?;
            out.push((key, v.trim().to_string()));
        }
        Ok(out)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => load_config_file(p)?,
            None => Vec::new(),
        };
        RunConfig::resolve(&file, &self.flag_entries()?)
    }
}

/// Parses arguments and runs the command. Usage errors surface as clap
/// errors, runtime failures as library errors.
pub fn run_from<I, T>(args: I) -> std::result::Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(CliError::Usage)?;
    let cfg = cli.resolve().map_err(CliError::Run)?;
    run(cli.command, &cfg).map_err(CliError::Run)
}

#[derive(Debug)]
pub enum CliError {
    Usage(clap::Error),
    Run(crate::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) => write!(f, "{e}"),
            CliError::Run(e) => write!(f, "error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}
