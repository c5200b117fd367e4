use std::fmt;

use crate::audiofeat::FeatureMatrix;
use crate::error::{Error, Result};
use crate::model::Model;

/// Fixed-size views of one utterance used by the probes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProbeFeatures {
    /// Time-mean of the acoustic input frames.
    pub avg_input: Vec<f32>,
    /// Time-mean of each RHN layer's activations, unit L2 norm.
    pub avg_layers: Vec<Vec<f32>>,
    pub embedding: Vec<f32>,
    /// Encoder timesteps, about duration_ms / (10 × stride).
    pub timestep_count: usize,
}

pub(crate) fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::DegenerateVector { norm: n });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Runs the speech encoder once and pools every layer over its valid steps.
pub fn extract_probe_features(model: &Model, features: &FeatureMatrix) -> Result<ProbeFeatures> {
    let enc = model.encode_utterance(features, None)?;
    let avg_layers = enc
        .layers
        .iter()
        .map(|t| {
            let (rows, cols) = t.dims2()?;
            let mut mean = vec![0.0f64; cols];
            for r in 0..rows {
                for (m, &v) in mean.iter_mut().zip(t.row(r)) {
                    *m += f64::from(v);
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows as f64);
            Ok(unit(&mean)?.into_iter().map(|v| v as f32).collect())
        })
        .collect::<Result<_>>()?;
    Ok(ProbeFeatures {
        avg_input: features.mean_over(features.num_frames()),
        avg_layers,
        embedding: enc.embedding,
        timestep_count: enc.valid_steps,
    })
}

/// A family of probe input vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureSet {
    AvgInput,
    /// 1-based RHN layer.
    Layer(usize),
    Embedding,
    Timesteps,
}

impl FeatureSet {
    /// Average input, every layer, then the utterance embedding.
    pub fn standard(layers: usize) -> Vec<FeatureSet> {
        std::iter::once(FeatureSet::AvgInput)
            .chain((1..=layers).map(FeatureSet::Layer))
            .chain(std::iter::once(FeatureSet::Embedding))
            .collect()
    }

    /// Position on the per-layer axis: 0 for the input, `layers + 1` for
    /// the embedding. Timestep counts have no position.
    pub fn axis(self, layers: usize) -> Option<usize> {
        match self {
            FeatureSet::AvgInput => Some(0),
            FeatureSet::Layer(n) => Some(n),
            FeatureSet::Embedding => Some(layers + 1),
            FeatureSet::Timesteps => None,
        }
    }

    pub fn vector(self, f: &ProbeFeatures) -> Result<Vec<f64>> {
        let widen = |v: &[f32]| v.iter().map(|&x| f64::from(x)).collect();
        match self {
            FeatureSet::AvgInput => Ok(widen(&f.avg_input)),
            FeatureSet::Layer(n) => f
                .avg_layers
                .get(n.wrapping_sub(1))
                .map(|v| widen(v))
                .ok_or(Error::OutOfRange {
                    index: n,
                    len: f.avg_layers.len(),
                }),
            FeatureSet::Embedding => Ok(widen(&f.embedding)),
            FeatureSet::Timesteps => Ok(vec![f.timestep_count as f64]),
        }
    }

    /// One row per utterance.
    pub fn matrix(self, features: &[&ProbeFeatures]) -> Result<Vec<Vec<f64>>> {
        features.iter().map(|f| self.vector(f)).collect()
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSet::AvgInput => f.write_str("avg_input"),
            FeatureSet::Layer(n) => write!(f, "layer{n}"),
            FeatureSet::Embedding => f.write_str("utt_emb"),
            FeatureSet::Timesteps => f.write_str("timesteps"),
        }
    }
}
