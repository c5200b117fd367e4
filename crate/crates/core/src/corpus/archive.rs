use std::path::Path;

use indexmap::IndexMap;
use rayon::prelude::*;

use super::Sample;
use crate::error::{Error, Result};
use crate::model::{Model, Utterance};
use crate::numcore::{Container, Tensor};
use crate::probes::{extract_probe_features, ProbeFeatures};

/// Probe features of every sample, computed in parallel, in sample order.
pub fn collect_probe_features(model: &Model, samples: &[Sample]) -> Result<IndexMap<String, ProbeFeatures>> {
    let feats = samples
        .par_iter()
        .map(|s| match &s.utterance {
            Utterance::Speech(f) => extract_probe_features(model, f),
            Utterance::Text(_) => Err(Error::Config("activation archives need a speech model".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(samples.iter().map(|s| s.id.clone()).zip(feats).collect())
}

pub fn archive_container(features: &IndexMap<String, ProbeFeatures>) -> Container {
    let mut c = Container::new();
    for (id, f) in features {
        c.insert(format!("{id}.avg_input"), Tensor::vector(f.avg_input.clone()));
        for (n, layer) in f.avg_layers.iter().enumerate() {
            c.insert(format!("{id}.layer{}", n + 1), Tensor::vector(layer.clone()));
        }
        c.insert(format!("{id}.emb"), Tensor::vector(f.embedding.clone()));
        c.insert(format!("{id}.nsteps"), Tensor::scalar(f.timestep_count as f32));
    }
    c
}

/// Writes the probe features of `samples` to `path`; returns the number of
/// utterances archived.
pub fn dump_activations(model: &Model, samples: &[Sample], path: impl AsRef<Path>) -> Result<usize> {
    let features = collect_probe_features(model, samples)?;
    archive_container(&features).save(path)?;
    Ok(features.len())
}

pub fn parse_archive(c: &Container) -> Result<IndexMap<String, ProbeFeatures>> {
    let mut out: IndexMap<String, ProbeFeatures> = IndexMap::new();
    for (name, t) in c.iter() {
        let (id, field) = name
            .rsplit_once('.')
            .ok_or_else(|| Error::Format(format!("archive entry {name:?} lacks a field suffix")))?;
        let f = out.entry(id.to_string()).or_default();
        match field {
            "avg_input" => f.avg_input = t.data().to_vec(),
            "emb" => f.embedding = t.data().to_vec(),
            "nsteps" => f.timestep_count = t.data().first().copied().unwrap_or(0.0) as usize,
            _ => {
                let n: usize = field
                    .strip_prefix("layer")
                    .and_then(|n| n.parse().ok())
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| Error::Format(format!("unknown archive field {field:?}")))?;
                if f.avg_layers.len() < n {
                    f.avg_layers.resize(n, Vec::new());
                }
                f.avg_layers[n - 1] = t.data().to_vec();
            }
        }
    }
    for (id, f) in &out {
        if f.embedding.is_empty() || f.avg_input.is_empty() || f.avg_layers.iter().any(Vec::is_empty) {
            return Err(Error::Format(format!("incomplete archive record {id:?}")));
        }
    }
    Ok(out)
}

pub fn load_activations(path: impl AsRef<Path>) -> Result<IndexMap<String, ProbeFeatures>> {
    parse_archive(&Container::load(path)?)
}
