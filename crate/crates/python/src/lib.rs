//! Python bindings: model construction and encoding, MFCC features, the
//! contrastive loss, retrieval metrics, probe statistics and the CLI.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use groundspeech::audiofeat::{featurize, read_wav, AudioSignal, FeatureMatrix};
use groundspeech::model::{Model, ModelConfig, ModelKind, Preset, Utterance};
use groundspeech::rng::substream;
use groundspeech::{evaluation, probes, training, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::MissingResource(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn features(rows: &[Vec<f32>]) -> PyResult<FeatureMatrix> {
    FeatureMatrix::from_rows(rows).map_err(py_err)
}

fn rows(f: &FeatureMatrix) -> Vec<Vec<f32>> {
    (0..f.num_frames()).map(|t| f.frame(t).to_vec()).collect()
}

/// A speech or text encoder paired with an image encoder.
#[pyclass(name = "Model", module = "groundspeech_py")]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    /// Fresh model for a named preset (`micro`, `coco-speech`, ...).
    /// `input_dim`, `image_dim` and `vocab_size` override the preset.
    #[new]
    #[pyo3(signature = (preset = "micro", seed = 0, input_dim = None, image_dim = None, vocab_size = None))]
    fn new(
        preset: &str,
        seed: u64,
        input_dim: Option<usize>,
        image_dim: Option<usize>,
        vocab_size: Option<usize>,
    ) -> PyResult<Self> {
        let mut cfg: ModelConfig = preset.parse::<Preset>().map_err(py_err)?.config();
        if let Some(d) = input_dim {
            cfg.input_dim = d;
        }
        if let Some(d) = image_dim {
            cfg.image_dim = d;
        }
        if let Some(v) = vocab_size {
            cfg.vocab_size = v;
        }
        let inner = Model::init(cfg, &mut substream(seed, "init")).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Model::load(path).map(|inner| Self { inner }).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind() {
            ModelKind::Speech => "speech",
            ModelKind::Text => "text",
        }
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.config().input_dim
    }

    #[getter]
    fn image_dim(&self) -> usize {
        self.inner.config().image_dim
    }

    fn parameter_names(&self) -> Vec<String> {
        self.inner.params().names().map(String::from).collect()
    }

    fn encode_image(&self, image: Vec<f32>) -> PyResult<Vec<f32>> {
        self.inner.encode_image(&image).map_err(py_err)
    }

    /// Unit-norm embedding of a `frames x dim` feature matrix.
    fn embed_speech(&self, frames: Vec<Vec<f32>>) -> PyResult<Vec<f32>> {
        self.inner.embed(&Utterance::Speech(features(&frames)?)).map_err(py_err)
    }

    fn embed_text(&self, tokens: Vec<usize>) -> PyResult<Vec<f32>> {
        self.inner.embed(&Utterance::Text(tokens)).map_err(py_err)
    }

    /// Embedding, attention weights and per-layer activations of one
    /// utterance. `mask` marks valid frames and must be a prefix.
    #[pyo3(signature = (frames, mask = None))]
    fn encode_utterance<'py>(
        &self,
        py: Python<'py>,
        frames: Vec<Vec<f32>>,
        mask: Option<Vec<bool>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let enc = self
            .inner
            .encode_utterance(&features(&frames)?, mask.as_deref())
            .map_err(py_err)?;
        let layers: Vec<Vec<Vec<f32>>> = enc
            .layers
            .iter()
            .map(|t| (0..t.rows()).map(|i| t.row(i).to_vec()).collect())
            .collect();
        let d = PyDict::new(py);
        d.set_item("embedding", enc.embedding)?;
        d.set_item("attention", enc.attention)?;
        d.set_item("layers", layers)?;
        d.set_item("valid_steps", enc.valid_steps)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        let c = self.inner.config();
        format!(
            "Model(kind={}, input_dim={}, image_dim={}, hidden_size={})",
            self.kind(),
            c.input_dim,
            c.image_dim,
            c.hidden_size
        )
    }
}

/// MFCC frames of raw samples (13 coefficients, or 37 with deltas).
#[pyfunction]
#[pyo3(signature = (samples, sample_rate = 16000, with_deltas = false, truncate_ms = None))]
fn mfcc(samples: Vec<f32>, sample_rate: u32, with_deltas: bool, truncate_ms: Option<u32>) -> PyResult<Vec<Vec<f32>>> {
    let signal = AudioSignal::new(samples, sample_rate).map_err(py_err)?;
    featurize(&signal, with_deltas, truncate_ms).map(|f| rows(&f)).map_err(py_err)
}

/// Samples of a 16 kHz mono 16-bit WAV file, scaled to [-1, 1).
#[pyfunction(name = "read_wav")]
fn read_wav_py(path: PathBuf) -> PyResult<Vec<f32>> {
    read_wav(path).map(|s| s.samples().to_vec()).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (utterances, images, margin = 0.2))]
fn contrastive_loss(utterances: Vec<Vec<f64>>, images: Vec<Vec<f64>>, margin: f64) -> PyResult<f64> {
    training::contrastive_loss(&utterances, &images, margin).map_err(py_err)
}

/// 1-based rank of each query's gold image under cosine distance.
#[pyfunction]
fn rank_images(utterances: Vec<Vec<f64>>, images: Vec<Vec<f64>>, gold: Vec<usize>) -> PyResult<Vec<usize>> {
    evaluation::rank_images(&utterances, &images, &gold).map_err(py_err)
}

/// `(R@1, R@5, R@10, median rank)` of a list of ranks.
#[pyfunction]
fn retrieval_summary(ranks: Vec<usize>) -> PyResult<(f64, f64, f64, f64)> {
    let r = evaluation::summarize(&ranks).map_err(py_err)?;
    Ok((r.r1(), r.r5(), r.r10(), r.median_rank))
}

#[pyfunction]
fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    probes::levenshtein_similarity(a, b)
}

#[pyfunction]
fn pearson_r(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    probes::pearson_r(&x, &y).map_err(py_err)
}

/// Runs the command-line interface with `args` (without the program name)
/// and returns what it would print.
#[pyfunction]
fn run_cli(args: Vec<String>) -> PyResult<String> {
    groundspeech::cli::run_from(std::iter::once("groundspeech".to_string()).chain(args)).map_err(|e| match e {
        groundspeech::cli::CliError::Run(e) => py_err(e),
        usage => PyValueError::new_err(usage.to_string()),
    })
}

#[pymodule]
fn groundspeech_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(mfcc, m)?)?;
    m.add_function(wrap_pyfunction!(read_wav_py, m)?)?;
    m.add_function(wrap_pyfunction!(contrastive_loss, m)?)?;
    m.add_function(wrap_pyfunction!(rank_images, m)?)?;
    m.add_function(wrap_pyfunction!(retrieval_summary, m)?)?;
    m.add_function(wrap_pyfunction!(levenshtein_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(pearson_r, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
