use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use super::config::RunConfig;
use super::Command;
use crate::audiofeat::{featurize, read_wav};
use crate::corpus::{
    collect_probe_features, dump_activations, feature_archive, featurize_records, generate_synthetic, load_activations,
    load_manifest, load_samples, read_similarity, read_table, LoadOptions, ManifestRecord, Sample, Split, COUNTS_FILE,
    LEXICON_FILE, SIMILARITY_FILE,
};
use crate::error::{Error, Result};
use crate::evaluation::{embed_for_retrieval, rank_images, summarize, write_rank_dump};
use crate::model::{Model, ModelKind, Utterance, Vocabulary};
use crate::probes::{
    default_stopwords, mine_homonyms, probe_homonyms, probe_length, probe_similarity, probe_word_presence,
    ProbeFeatures, ProbeReport, SimilarityData, VARIANT_SPELLINGS,
};
use crate::rng::substream;
use crate::training::{fit, write_log};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train.log";
pub const RETRIEVAL_FILE: &str = "retrieval.csv";
pub const RANKS_FILE: &str = "ranks.csv";
const RETRIEVAL_HEADER: &str = "R@1,R@5,R@10,medr";
const WORDS_DIR: &str = "words";
const TASKS: [&str; 4] = ["length", "wordpresence", "similarity", "homonym"];

/// Text models keep their vocabulary next to the checkpoint.
pub fn vocabulary_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("vocab")
}

/// Runs one command and returns a short summary for standard output.
pub fn run(command: Command, cfg: &RunConfig) -> Result<String> {
    match command {
        Command::Synth => synth(cfg),
        Command::Featurize => featurize_cmd(cfg),
        Command::Train => train(cfg),
        Command::Evaluate => evaluate_cmd(cfg),
        Command::DumpActivations => dump_cmd(cfg),
        Command::Probe => probe_cmd(cfg),
    }
}

fn header(cfg: &RunConfig) -> String {
    cfg.entries().iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

fn select(records: &[ManifestRecord], split: &str) -> Result<Vec<ManifestRecord>> {
    if split == "all" {
        return Ok(records.to_vec());
    }
    let s: Split = split.parse()?;
    Ok(records.iter().filter(|r| r.split == s).cloned().collect())
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).to_path_buf()
}

fn load_options(cfg: &RunConfig, vocabulary: Option<Vocabulary>) -> LoadOptions {
    LoadOptions {
        with_deltas: cfg.with_deltas,
        truncate_ms: cfg.truncate_ms,
        features: cfg.features.clone(),
        vocabulary,
    }
}

fn load_model(checkpoint: &Path) -> Result<(Model, Option<Vocabulary>)> {
    let model = Model::load(checkpoint)?;
    let vocab = match model.kind() {
        ModelKind::Text => Some(Vocabulary::load(vocabulary_path(checkpoint))?),
        ModelKind::Speech => None,
    };
    Ok((model, vocab))
}

fn synth(cfg: &RunConfig) -> Result<String> {
    let out = cfg.require(&cfg.out, "out")?;
    let corpus = generate_synthetic(&cfg.synth_config())?;
    let records = corpus.write(out)?;
    Ok(format!("wrote {} utterances to {}\n", records.len(), out.display()))
}

fn featurize_cmd(cfg: &RunConfig) -> Result<String> {
    let manifest = cfg.require(&cfg.manifest, "manifest")?;
    let out = cfg.require(&cfg.out, "out")?;
    let records = load_manifest(manifest)?;
    let opts = LoadOptions {
        features: None,
        ..load_options(cfg, None)
    };
    let feats = featurize_records(&manifest_dir(manifest), &records, &opts)?;
    feature_archive(&records, &feats).save(out)?;
    Ok(format!("wrote features of {} utterances to {}\n", records.len(), out.display()))
}

fn train(cfg: &RunConfig) -> Result<String> {
    let manifest = cfg.require(&cfg.manifest, "manifest")?;
    let out = cfg.require(&cfg.out, "out")?;
    let records = load_manifest(manifest)?;
    let train_recs = select(&records, &cfg.train_split)?;
    let val_recs = select(&records, &cfg.val_split)?;
    let mut model_cfg = cfg.preset.config();
    let vocab = (model_cfg.kind == ModelKind::Text).then(|| Vocabulary::build(train_recs.iter().map(|r| &r.transcript)));
    if let Some(v) = &vocab {
        model_cfg.vocab_size = v.len();
    }
    let opts = load_options(cfg, vocab.clone());
    let train_set = load_samples(manifest, &train_recs, &opts)?;
    let val_set = load_samples(manifest, &val_recs, &opts)?;
    let first = train_set
        .first()
        .ok_or_else(|| Error::Config(format!("split {} is empty", cfg.train_split)))?;
    model_cfg.image_dim = first.image.len();
    if let Utterance::Speech(f) = &first.utterance {
        model_cfg.input_dim = f.dim();
    }
    let model = Model::init(model_cfg, &mut substream(cfg.seed, "init"))?;
    let outcome = fit(model, &train_set, &val_set, &cfg.train_config())?;

    fs::create_dir_all(out)?;
    let checkpoint = cfg.checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT_FILE));
    outcome.model.save(&checkpoint)?;
    if let Some(v) = &vocab {
        v.save(vocabulary_path(&checkpoint))?;
    }
    let mut log = header(cfg).into_bytes();
    let best = outcome.best_epoch.map_or("none".to_string(), |e| e.to_string());
    log.extend(format!("# best_epoch={best}\n").bytes());
    write_log(&mut log, &outcome.log)?;
    fs::write(out.join(LOG_FILE), &log)?;
    let mut summary = format!("trained {} epochs, best epoch {best}\n", outcome.log.len());
    if let Some(last) = outcome.log.last() {
        writeln!(summary, "last epoch: loss {} validation {}", last.loss, last.validation).expect("string write");
    }
    Ok(summary)
}

fn evaluate_cmd(cfg: &RunConfig) -> Result<String> {
    let manifest = cfg.require(&cfg.manifest, "manifest")?;
    let checkpoint = cfg.require(&cfg.checkpoint, "checkpoint")?;
    let (model, vocab) = load_model(checkpoint)?;
    let records = select(&load_manifest(manifest)?, &cfg.eval_split)?;
    let samples = load_samples(manifest, &records, &load_options(cfg, vocab))?;
    let (utts, images, gold) = embed_for_retrieval(&model, &samples)?;
    let ranks = rank_images(&utts, &images, &gold)?;
    let result = summarize(&ranks)?;
    let report = format!("{RETRIEVAL_HEADER}\n{result}\n");
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out)?;
        fs::write(out.join(RETRIEVAL_FILE), &report)?;
        let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
        let mut dump = Vec::new();
        write_rank_dump(&mut dump, &ids, &ranks)?;
        fs::write(out.join(RANKS_FILE), dump)?;
    }
    Ok(report)
}

fn speech_samples(cfg: &RunConfig, manifest: &Path, records: &[ManifestRecord]) -> Result<Vec<Sample>> {
    load_samples(manifest, records, &load_options(cfg, None))
}

fn dump_cmd(cfg: &RunConfig) -> Result<String> {
    let manifest = cfg.require(&cfg.manifest, "manifest")?;
    let checkpoint = cfg.require(&cfg.checkpoint, "checkpoint")?;
    let out = cfg.require(&cfg.out, "out")?;
    let (model, _) = load_model(checkpoint)?;
    let records = load_manifest(manifest)?;
    let n = dump_activations(&model, &speech_samples(cfg, manifest, &records)?, out)?;
    Ok(format!("wrote activations of {n} utterances to {}\n", out.display()))
}

fn task_list(task: &str) -> Result<Vec<&'static str>> {
    if task == "all" {
        return Ok(TASKS.to_vec());
    }
    TASKS
        .iter()
        .find(|&&t| t == task)
        .map(|&t| vec![t])
        .ok_or_else(|| Error::Config(format!("unknown probe task {task:?}; expected one of {TASKS:?} or all")))
}

/// Time-mean acoustic features of every isolated word recording.
fn word_vectors(dir: &Path, cfg: &RunConfig) -> Result<IndexMap<String, Vec<f64>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::MissingResource(format!("{}: {e}", dir.display())))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "wav"));
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let word = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let f = featurize(&read_wav(p)?, cfg.with_deltas, None)?;
            Ok((word, f.mean_over(f.num_frames()).into_iter().map(f64::from).collect()))
        })
        .collect()
}

fn gather<'a>(feats: &'a IndexMap<String, ProbeFeatures>, ids: &[&str]) -> Result<Vec<&'a ProbeFeatures>> {
    ids.iter()
        .map(|id| {
            feats
                .get(*id)
                .ok_or_else(|| Error::MissingResource(format!("probe features for {id}")))
        })
        .collect()
}

fn probe_cmd(cfg: &RunConfig) -> Result<String> {
    let manifest = cfg.require(&cfg.manifest, "manifest")?;
    let dir = manifest_dir(manifest);
    let tasks = task_list(&cfg.task)?;
    let records = load_manifest(manifest)?;
    let feats = match (&cfg.activations, &cfg.checkpoint) {
        (Some(a), _) => load_activations(a)?,
        (None, Some(ckpt)) => {
            let (model, _) = load_model(ckpt)?;
            collect_probe_features(&model, &speech_samples(cfg, manifest, &records)?)?
        }
        (None, None) => {
            return Err(Error::Config(
                "probe needs --checkpoint or an activations archive (activations=PATH)".into(),
            ))
        }
    };
    let words_of: IndexMap<&str, &[String]> = records
        .iter()
        .map(|r| (r.utt_id.as_str(), r.transcript.as_slice()))
        .collect();
    let probe_recs = select(&records, &cfg.probe_split)?;
    let probe_ids: Vec<&str> = probe_recs.iter().map(|r| r.utt_id.as_str()).collect();
    let probe_words: Vec<Vec<String>> = probe_recs.iter().map(|r| r.transcript.clone()).collect();

    let mut report = ProbeReport {
        meta: cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        rows: Vec::new(),
    };
    for task in tasks {
        let part = match task {
            "length" => {
                let lengths: Vec<f64> = probe_words.iter().map(|w| w.len() as f64).collect();
                probe_length(&gather(&feats, &probe_ids)?, &lengths, cfg.seed)?
            }
            "wordpresence" => {
                let wdir = cfg.word_audio.clone().unwrap_or_else(|| dir.join(WORDS_DIR));
                let vectors = word_vectors(&wdir, cfg)?;
                probe_word_presence(
                    &gather(&feats, &probe_ids)?,
                    &probe_words,
                    &vectors,
                    default_stopwords(),
                    &cfg.mlp_config(),
                    cfg.seed,
                )?
            }
            "similarity" => similarity_task(cfg, &dir, &feats, &words_of)?,
            "homonym" => {
                let lexicon = read_table(dir.join(LEXICON_FILE))?;
                let counts = read_table(dir.join(COUNTS_FILE))?
                    .into_iter()
                    .map(|(w, c)| {
                        c.parse()
                            .map(|c| (w, c))
                            .map_err(|_| Error::Config(format!("bad count {c:?} in {COUNTS_FILE}")))
                    })
                    .collect::<Result<IndexMap<String, usize>>>()?;
                let pairs = mine_homonyms(&lexicon, &counts, default_stopwords(), VARIANT_SPELLINGS);
                let ids: Vec<&str> = words_of.keys().copied().collect();
                let words: Vec<Vec<String>> = words_of.values().map(|w| w.to_vec()).collect();
                probe_homonyms(&pairs, &gather(&feats, &ids)?, &words, cfg.seed)?
            }
            _ => unreachable!("validated task name"),
        };
        report.rows.extend(part.rows);
    }
    let text = report.to_string();
    if let Some(out) = &cfg.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(out, &text)?;
    }
    Ok(text)
}

fn similarity_task(
    cfg: &RunConfig,
    dir: &Path,
    feats: &IndexMap<String, ProbeFeatures>,
    words_of: &IndexMap<&str, &[String]>,
) -> Result<ProbeReport> {
    let table = read_similarity(dir.join(SIMILARITY_FILE))?;
    let mut items: IndexMap<&str, usize> = IndexMap::new();
    let mut pairs = Vec::with_capacity(table.len());
    for p in &table {
        let mut index = |id: &str| -> Result<usize> {
            let (key, _) = words_of
                .get_key_value(id)
                .ok_or_else(|| Error::MissingResource(format!("similarity item {id} is not in the manifest")))?;
            let next = items.len();
            Ok(*items.entry(*key).or_insert(next))
        };
        pairs.push((index(&p.a)?, index(&p.b)?));
    }
    let ids: Vec<&str> = items.keys().copied().collect();
    let sentences: Vec<String> = ids.iter().map(|id| words_of[id].join(" ")).collect();
    let ratings: Vec<f64> = table.iter().map(|p| p.rating).collect();
    let text_embeddings = match &cfg.text_checkpoint {
        Some(ckpt) => {
            let (model, vocab) = load_model(ckpt)?;
            let vocab = vocab.ok_or_else(|| Error::Config("text_checkpoint must hold a text model".into()))?;
            Some(
                ids.iter()
                    .map(|id| {
                        let e = model.embed(&Utterance::Text(vocab.encode(words_of[id])))?;
                        Ok(e.into_iter().map(f64::from).collect())
                    })
                    .collect::<Result<Vec<Vec<f64>>>>()?,
            )
        }
        None => None,
    };
    let data = SimilarityData {
        pairs: &pairs,
        ratings: &ratings,
        sentences: &sentences,
        text_embeddings: text_embeddings.as_deref(),
    };
    probe_similarity(&gather(feats, &ids)?, &data, cfg.bootstrap, cfg.seed)
}
