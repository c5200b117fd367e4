//! Image encoder, convolution + residual RHN + attention utterance encoder,
//! and the word-embedding text encoder.

mod config;
pub mod encoder;
mod vocab;

pub use config::{ModelConfig, ModelKind, Preset};
pub use encoder::{
    attention_pool, encode_image, encode_text, encode_utterance, rhn_layer, rhn_microstep, rhn_stack, valid_prefix,
    ImageNodes, RhnLayerNodes, SpeechNodes, TextNodes, UtteranceNodes,
};
pub use vocab::{Vocabulary, UNKNOWN_ID, UNKNOWN_WORD};

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::audiofeat::FeatureMatrix;
use crate::error::{Error, Result};
use crate::numcore::{Bound, Container, Graph, NodeId, Params, Scalar, Tensor};

/// Initial transform-gate bias; negative values favour carrying state.
pub const TRANSFORM_BIAS_INIT: f32 = -1.0;

/// Canonical parameter names and shapes for a configuration, in checkpoint order.
pub fn parameter_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = vec![
        ("img.A".to_string(), vec![cfg.hidden_size, cfg.image_dim]),
        ("img.b".to_string(), vec![cfg.hidden_size]),
    ];
    match cfg.kind {
        ModelKind::Speech => {
            out.push(("conv.K".into(), vec![cfg.conv_length, cfg.input_dim, cfg.conv_size]));
            out.push(("conv.b".into(), vec![cfg.conv_size]));
        }
        ModelKind::Text => out.push(("emb.E".into(), vec![cfg.vocab_size, cfg.embed_dim])),
    }
    let h = cfg.hidden_size;
    for n in 1..=cfg.rhn_layers {
        let input = if n == 1 { cfg.rhn_input_dim() } else { h };
        for gate in ["H", "T"] {
            out.push((format!("rhn{n}.{gate}.W"), vec![h, input]));
            for l in 1..=cfg.microsteps {
                out.push((format!("rhn{n}.{gate}.U{l}"), vec![h, h]));
                out.push((format!("rhn{n}.{gate}.b{l}"), vec![h]));
            }
        }
    }
    if cfg.kind == ModelKind::Speech {
        out.push(("attn.W".into(), vec![cfg.attn_hidden, h]));
        out.push(("attn.U".into(), vec![1, cfg.attn_hidden]));
    }
    out
}

fn glorot(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [s, d_in, d_out] => (s * d_in, *d_out),
        [rows, cols] => (*cols, *rows),
        _ => (1, 1),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Encoder input for one utterance: acoustic frames or token ids.
#[derive(Clone, Debug, PartialEq)]
pub enum Utterance {
    Speech(FeatureMatrix),
    Text(Vec<usize>),
}

/// Builds the joint-space embedding node for `utt` from bound parameters.
pub fn embed_node<T: Scalar>(g: &mut Graph<T>, b: &Bound, cfg: &ModelConfig, utt: &Utterance) -> Result<NodeId> {
    match utt {
        Utterance::Speech(f) => {
            encoder::expect_kind(cfg, ModelKind::Speech)?;
            if f.dim() != cfg.input_dim {
                return Err(Error::Dimension {
                    op: "encode_utterance",
                    left: vec![cfg.input_dim],
                    right: vec![f.dim()],
                });
            }
            let nodes = SpeechNodes::from_bound(b, cfg)?;
            Ok(encode_utterance(g, &nodes, &f.tensor().cast(), None)?.embedding)
        }
        Utterance::Text(tokens) => {
            encoder::expect_kind(cfg, ModelKind::Text)?;
            let nodes = TextNodes::from_bound(b, cfg)?;
            Ok(encode_text(g, &nodes, tokens)?.0)
        }
    }
}

/// Per-utterance output of the speech encoder.
#[derive(Clone, Debug)]
pub struct UtteranceEncoding {
    pub embedding: Vec<f32>,
    /// Post-residual activations of each RHN layer, valid steps only.
    pub layers: Vec<Tensor<f32>>,
    /// Attention weights over all convolution steps (zero on padding).
    pub attention: Vec<f32>,
    pub valid_steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: Params<f32>,
}

impl Model {
    /// Random initialization: uniform ±√(6/(fan_in+fan_out)) weights, zero
    /// biases, transform-gate biases at [`TRANSFORM_BIAS_INIT`].
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = Params::new();
        for (name, shape) in parameter_shapes(&config) {
            let n: usize = shape.iter().product();
            let is_bias = shape.len() == 1;
            let data: Vec<f32> = if is_bias {
                let v = if name.contains(".T.b") { TRANSFORM_BIAS_INIT } else { 0.0 };
                vec![v; n]
            } else {
                let bound = glorot(&shape);
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                (0..n).map(|_| dist.sample(rng) as f32).collect()
            };
            params.insert(name, Tensor::new(shape, data)?);
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Params<f32>) -> Result<Self> {
        config.validate()?;
        for (name, shape) in parameter_shapes(&config) {
            let t = params.get(&name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Dimension {
                    op: "checkpoint parameter",
                    left: shape,
                    right: t.shape().to_vec(),
                });
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<f32> {
        &mut self.params
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn encode_image(&self, image: &[f32]) -> Result<Vec<f32>> {
        if image.len() != self.config.image_dim {
            return Err(Error::Dimension {
                op: "encode_image",
                left: vec![self.config.image_dim],
                right: vec![image.len()],
            });
        }
        let mut g = Graph::new();
        let b = self.params.bind_constants(&mut g);
        let i = g.constant(Tensor::vector(image.to_vec()));
        let out = encode_image(&mut g, ImageNodes::from_bound(&b)?, i)?;
        Ok(g.value(out).data().to_vec())
    }

    pub fn encode_utterance(&self, features: &FeatureMatrix, mask: Option<&[bool]>) -> Result<UtteranceEncoding> {
        encoder::expect_kind(&self.config, ModelKind::Speech)?;
        if features.dim() != self.config.input_dim {
            return Err(Error::Dimension {
                op: "encode_utterance",
                left: vec![self.config.input_dim],
                right: vec![features.dim()],
            });
        }
        let mut g = Graph::new();
        let b = self.params.bind_constants(&mut g);
        let nodes = SpeechNodes::from_bound(&b, &self.config)?;
        let out = encode_utterance(&mut g, &nodes, features.tensor(), mask)?;
        let layers = out
            .layers
            .iter()
            .map(|&id| {
                let v = g.value(id);
                let w = v.cols();
                Tensor::matrix(out.valid_steps, w, v.data()[..out.valid_steps * w].to_vec())
            })
            .collect::<Result<_>>()?;
        Ok(UtteranceEncoding {
            embedding: g.value(out.embedding).data().to_vec(),
            layers,
            attention: g.value(out.attention).data().to_vec(),
            valid_steps: out.valid_steps,
        })
    }

    /// Text embedding plus each layer's activations.
    pub fn encode_text(&self, tokens: &[usize]) -> Result<(Vec<f32>, Vec<Tensor<f32>>)> {
        encoder::expect_kind(&self.config, ModelKind::Text)?;
        let mut g = Graph::new();
        let b = self.params.bind_constants(&mut g);
        let nodes = TextNodes::from_bound(&b, &self.config)?;
        let (emb, layers) = encode_text(&mut g, &nodes, tokens)?;
        Ok((
            g.value(emb).data().to_vec(),
            layers.iter().map(|&id| g.value(id).clone()).collect(),
        ))
    }

    /// Joint-space embedding of a speech or text utterance.
    pub fn embed(&self, utt: &Utterance) -> Result<Vec<f32>> {
        let mut g = Graph::new();
        let b = self.params.bind_constants(&mut g);
        let out = embed_node(&mut g, &b, &self.config, utt)?;
        Ok(g.value(out).data().to_vec())
    }

    pub fn to_container(&self) -> Container {
        let mut c = self.params.to_container();
        c.insert("meta.config", Tensor::vector(self.config.to_meta()));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let config = ModelConfig::from_meta(c.require("meta.config")?.data())?;
        let mut params = Params::new();
        for (name, _) in parameter_shapes(&config) {
            params.insert(name.clone(), c.require(&name)?.clone());
        }
        Self::from_params(config, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}
