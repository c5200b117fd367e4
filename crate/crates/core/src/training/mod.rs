//! Contrastive margin objective, Adam and the epoch loop with model
//! selection on validation recall@10.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::corpus::Sample;
use crate::error::{dim_err, Error, Result};
use crate::evaluation::{self, RetrievalResult};
use crate::model::{embed_node, encode_image, ImageNodes, Model, ModelConfig, Preset};
use crate::numcore::{Graph, NodeId, Params, Scalar, Tensor};
use crate::rng::substream;

pub const DEFAULT_MARGIN: f64 = 0.2;
pub const DEFAULT_BATCH: usize = 32;
pub const LOG_HEADER: &str = "epoch,loss,R@1,R@5,R@10,medr";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub margin: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { margin: DEFAULT_MARGIN }
    }
}

/// `1 − u·i` for unit vectors.
pub fn cosine_distance<T: Scalar>(u: &[T], i: &[T]) -> T {
    T::one() - u.iter().zip(i).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

/// Adds the bidirectional hinge loss over rows of `u[n×h]` and `i[n×h]`,
/// where row `j` of each forms the matched pair and all other rows in the
/// batch act as negatives.
pub fn contrastive_loss_node<T: Scalar>(g: &mut Graph<T>, u: NodeId, i: NodeId, margin: T) -> Result<NodeId> {
    let (n, _) = g.value(u).dims2()?;
    if g.shape(u) != g.shape(i) {
        return Err(dim_err("contrastive_loss", g.shape(u), g.shape(i)));
    }
    if n < 2 {
        return Err(Error::NoNegatives(n));
    }
    let it = g.transpose(i)?;
    let sim = g.matmul(u, it)?;
    g.margin_ranking(sim, margin)
}

fn stack<T: Scalar>(rows: &[Vec<T>]) -> Result<Tensor<T>> {
    if rows.len() < 2 {
        return Err(Error::NoNegatives(rows.len()));
    }
    Tensor::from_rows(rows)
}

/// Loss value for matched rows of `u` and `i`.
pub fn contrastive_loss<T: Scalar>(u: &[Vec<T>], i: &[Vec<T>], margin: T) -> Result<T> {
    contrastive_loss_with_grads(u, i, margin).map(|(l, _, _)| l)
}

/// Loss value plus its gradients with respect to every row of `u` and `i`.
#[allow(clippy::type_complexity)]
pub fn contrastive_loss_with_grads<T: Scalar>(
    u: &[Vec<T>],
    i: &[Vec<T>],
    margin: T,
) -> Result<(T, Vec<Vec<T>>, Vec<Vec<T>>)> {
    let mut g = Graph::new();
    let un = g.param(stack(u)?);
    let inode = g.param(stack(i)?);
    let loss = contrastive_loss_node(&mut g, un, inode, margin)?;
    g.backward(loss)?;
    let rows = |g: &Graph<T>, id| {
        let t: &Tensor<T> = g.grad(id).expect("tracked leaf");
        (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
    };
    Ok((g.value(loss).data()[0], rows(&g, un), rows(&g, inode)))
}

fn is_image_param(name: &str) -> bool {
    name.starts_with("img.")
}

/// Contrastive loss of one batch and its gradient for every parameter.
///
/// Each utterance is encoded in its own graph (in parallel); the loss graph
/// treats the utterance embeddings as leaves, and their gradients are pushed
/// back through the utterance graphs afterwards. Gradients are summed in
/// batch order, so the result does not depend on thread scheduling.
pub fn batch_loss_and_gradients<T: Scalar>(
    cfg: &ModelConfig,
    params: &Params<T>,
    batch: &[&Sample],
    margin: T,
) -> Result<(T, Params<T>)> {
    if batch.len() < 2 {
        return Err(Error::NoNegatives(batch.len()));
    }
    let mut encoded = batch
        .par_iter()
        .map(|s| {
            let mut g = Graph::new();
            let b = params.bind_where(&mut g, |n| !is_image_param(n));
            let emb = embed_node(&mut g, &b, cfg, &s.utterance)?;
            Ok((g, b, emb))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut g = Graph::new();
    let ib = params.bind_where(&mut g, is_image_param);
    let img = ImageNodes::from_bound(&ib)?;
    let mut u_leaves = Vec::with_capacity(batch.len());
    let mut i_rows = Vec::with_capacity(batch.len());
    for ((ug, _, emb), s) in encoded.iter().zip(batch) {
        u_leaves.push(g.param(ug.value(*emb).clone()));
        if s.image.len() != cfg.image_dim {
            return Err(dim_err("image vector", &[cfg.image_dim], &[s.image.len()]));
        }
        let x = g.constant(Tensor::vector(s.image.iter().map(|&v| T::of(f64::from(v))).collect()));
        i_rows.push(encode_image(&mut g, img, x)?);
    }
    let u = g.stack_rows(&u_leaves)?;
    let i = g.stack_rows(&i_rows)?;
    let loss = contrastive_loss_node(&mut g, u, i, margin)?;
    g.backward(loss)?;
    let loss_value = g.value(loss).data()[0];

    encoded
        .par_iter_mut()
        .zip(&u_leaves)
        .try_for_each(|((ug, _, emb), leaf)| {
            let seed = g.grad(*leaf).cloned().unwrap_or_else(|| Tensor::zeros(ug.shape(*emb)));
            ug.backward_with(*emb, seed)
        })?;

    let mut grads = params.zeros_like();
    grads.accumulate(&ib.gradients(&g));
    for (ug, b, _) in &encoded {
        grads.accumulate(&b.gradients(ug));
    }
    Ok((loss_value, grads))
}

/// Adam moments, step counter and hyperparameters.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub m: Params<T>,
    pub v: Params<T>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &Params<T>, learning_rate: f64) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Parameters are left untouched when any
/// gradient is non-finite.
pub fn adam_step<T: Scalar>(params: &mut Params<T>, grads: &Params<T>, state: &mut OptimizerState<T>) -> Result<()> {
    for (name, gr) in grads.iter() {
        if !gr.is_finite() {
            return Err(Error::NumericFault {
                location: format!("gradient of {name}"),
            });
        }
        let p = params.get(name)?;
        if p.shape() != gr.shape() {
            return Err(dim_err("adam_step", p.shape(), gr.shape()));
        }
    }
    state.step += 1;
    let (b1, b2) = (T::of(state.beta1), T::of(state.beta2));
    let c1 = T::one() - T::of(state.beta1.powi(state.step as i32));
    let c2 = T::one() - T::of(state.beta2.powi(state.step as i32));
    let (lr, eps) = (T::of(state.learning_rate), T::of(state.eps));
    for (name, gr) in grads.iter() {
        let m = state.m.get_mut(name).ok_or_else(|| Error::MissingResource(name.into()))?;
        let v = state.v.get_mut(name).ok_or_else(|| Error::MissingResource(name.into()))?;
        let p = params.get_mut(name).expect("checked above");
        for (((p, m), v), &g) in p
            .data_mut()
            .iter_mut()
            .zip(m.data_mut())
            .zip(v.data_mut())
            .zip(gr.data())
        {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p = *p - lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients<T: Scalar>(grads: &mut Params<T>, max_norm: f64) -> f64 {
    let norm = grads
        .values()
        .flat_map(|t| t.data())
        .map(|v| v.to_f64().unwrap_or(f64::NAN).powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = T::of(max_norm / norm);
        for (_, t) in grads.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = *v * s);
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub loss: LossConfig,
    /// Max gradient norm; no clipping when `None`.
    pub clip_norm: Option<f64>,
}

impl TrainConfig {
    pub fn for_preset(preset: Preset) -> Self {
        Self {
            learning_rate: preset.learning_rate(),
            ..Self::default()
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: Preset::CocoSpeech.learning_rate(),
            batch_size: DEFAULT_BATCH,
            max_epochs: 25,
            seed: 0,
            loss: LossConfig::default(),
            clip_norm: None,
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch, each taken before its update.
    pub loss: f64,
    pub validation: RetrievalResult,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.epoch, self.loss, self.validation)
    }
}

pub fn write_log<W: Write>(mut out: W, log: &[EpochRecord]) -> Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for r in log {
        writeln!(out, "{r}")?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Parameters of the selected epoch (the initialization if no epoch ran).
    pub model: Model,
    pub log: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Ordering used for model selection: recall@10 first, then recall@5,
/// recall@1, lower median rank and lower loss.
fn selection_cmp(a: &EpochRecord, b: &EpochRecord) -> Ordering {
    let key = |r: &EpochRecord| {
        [
            r.validation.r10(),
            r.validation.r5(),
            r.validation.r1(),
            -r.validation.median_rank,
            -r.loss,
        ]
    };
    key(a)
        .iter()
        .zip(key(b).iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Splits shuffled indices into batches; a trailing singleton joins the
/// previous batch since it has no negatives of its own.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size.max(2)).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * size.max(2);
        out[n - 1] = &order[start..];
    }
    out
}

/// Trains with Adam, evaluating validation retrieval after every epoch and
/// keeping the parameters of the best epoch.
pub fn fit(model: Model, train: &[Sample], validation: &[Sample], cfg: &TrainConfig) -> Result<FitOutcome> {
    if train.len() < 2 {
        return Err(Error::Config(format!("training split needs at least 2 pairs, got {}", train.len())));
    }
    if validation.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    if cfg.batch_size < 2 {
        return Err(Error::Config("batch size must be at least 2".into()));
    }
    if cfg.loss.margin <= 0.0 {
        return Err(Error::Config("margin must be positive".into()));
    }
    let model_cfg = model.config().clone();
    let mut params = model.params().clone();
    let mut state = OptimizerState::new(&params, cfg.learning_rate);
    let mut rng = substream(cfg.seed, "shuffle");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(usize, Params<f32>)> = None;
    let margin = cfg.loss.margin as f32;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let groups = batches(&order, cfg.batch_size);
        for group in &groups {
            let batch: Vec<&Sample> = group.iter().map(|&k| &train[k]).collect();
            let (loss, mut grads) = batch_loss_and_gradients(&model_cfg, &params, &batch, margin)?;
            if let Some(c) = cfg.clip_norm {
                clip_gradients(&mut grads, c);
            }
            adam_step(&mut params, &grads, &mut state)?;
            total += f64::from(loss);
        }
        let current = Model::from_params(model_cfg.clone(), params.clone())?;
        let record = EpochRecord {
            epoch,
            loss: total / groups.len() as f64,
            validation: evaluation::evaluate(&current, validation)?,
        };
        let improved = match &best {
            None => true,
            Some((e, _)) => selection_cmp(&record, &log[*e - 1]) == Ordering::Greater,
        };
        if improved {
            best = Some((epoch, params.clone()));
        }
        log.push(record);
    }
    let (best_epoch, model) = match best {
        Some((e, p)) => (Some(e), Model::from_params(model_cfg, p)?),
        None => (None, model),
    };
    Ok(FitOutcome {
        model,
        log,
        best_epoch,
    })
}

/// Full-batch contrastive loss of a model on `samples`.
pub fn dataset_loss(model: &Model, samples: &[Sample], margin: f64) -> Result<f64> {
    let u: Vec<Vec<f32>> = samples
        .par_iter()
        .map(|s| model.embed(&s.utterance))
        .collect::<Result<_>>()?;
    let i: Vec<Vec<f32>> = samples
        .iter()
        .map(|s| model.encode_image(&s.image))
        .collect::<Result<_>>()?;
    contrastive_loss(&u, &i, margin as f32).map(f64::from)
}
