use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{dim_err, Error, Result};
use crate::numcore::{Bound, Graph, NodeId, Params, Tensor};
use crate::training::{adam_step, OptimizerState};

#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Fraction of training instances held out for early stopping.
    pub holdout: f64,
    /// Epochs without holdout improvement before stopping.
    pub patience: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 1024,
            learning_rate: 0.001,
            batch_size: 32,
            max_epochs: 200,
            holdout: 0.1,
            patience: 10,
        }
    }
}

/// Per-column mean and standard deviation from the training rows.
#[derive(Clone, Debug)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let n = rows.len() as f64;
        let d = rows[0].len();
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale = (0..d)
            .map(|j| {
                let sd = (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, rows: &[&Vec<f64>]) -> Tensor<f32> {
        let d = self.mean.len();
        let data = rows
            .iter()
            .flat_map(|r| (0..d).map(move |j| ((r[j] - self.mean[j]) / self.scale[j]) as f32))
            .collect();
        Tensor::new(vec![rows.len(), d], data).expect("rows have the standardizer width")
    }
}

/// One-hidden-layer rectifier network with a logistic output.
#[derive(Clone, Debug)]
pub struct MlpClassifier {
    params: Params<f32>,
    standardizer: Standardizer,
}

fn logits(g: &mut Graph<f32>, b: &Bound, x: Tensor<f32>) -> Result<NodeId> {
    let rows = x.rows();
    let x = g.constant(x);
    let h = g.affine(x, b.id("w1")?, Some(b.id("b1")?))?;
    let h = g.relu(h);
    let z = g.affine(h, b.id("w2")?, Some(b.id("b2")?))?;
    g.reshape(z, vec![rows])
}

impl MlpClassifier {
    /// Trains with Adam on binary cross-entropy, keeping the parameters with
    /// the lowest holdout loss.
    pub fn fit<R: Rng>(x: &[Vec<f64>], y: &[bool], cfg: &MlpConfig, rng: &mut R) -> Result<Self> {
        if x.len() != y.len() {
            return Err(dim_err("mlp", &[x.len()], &[y.len()]));
        }
        if x.len() < 10 {
            return Err(Error::InsufficientData(format!("mlp needs at least 10 instances, got {}", x.len())));
        }
        if cfg.hidden == 0 || cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.holdout) {
            return Err(Error::Config("mlp needs hidden ≥ 1, batch ≥ 1 and holdout in [0, 1)".into()));
        }
        let d = x[0].len();
        if let Some(r) = x.iter().find(|r| r.len() != d) {
            return Err(dim_err("mlp features", &[d], &[r.len()]));
        }
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.shuffle(rng);
        let n_hold = ((x.len() as f64 * cfg.holdout).round() as usize).min(x.len() - 2);
        let (hold, train) = order.split_at(n_hold);
        let mut train = train.to_vec();

        let standardizer = Standardizer::fit(&train.iter().map(|&i| x[i].clone()).collect::<Vec<_>>());
        let target = |ids: &[usize]| ids.iter().map(|&i| if y[i] { 1.0f32 } else { 0.0 }).collect::<Vec<_>>();
        let rows = |ids: &[usize]| standardizer.apply(&ids.iter().map(|&i| &x[i]).collect::<Vec<_>>());

        let init = |fan_in: usize, shape: &[usize], rng: &mut R| {
            let normal = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).expect("positive scale");
            let n = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..n).map(|_| normal.sample(rng)).collect()).expect("shape matches data")
        };
        let mut params = Params::new();
        params.insert("w1", init(d, &[cfg.hidden, d], rng));
        params.insert("b1", Tensor::zeros(&[cfg.hidden]));
        params.insert("w2", init(cfg.hidden, &[1, cfg.hidden], rng));
        params.insert("b2", Tensor::zeros(&[1]));
        let mut state = OptimizerState::new(&params, cfg.learning_rate);

        let hold_x = (!hold.is_empty()).then(|| rows(hold));
        let hold_y = target(hold);
        let mut best = (f32::INFINITY, params.clone());
        let mut stale = 0;
        for _ in 0..cfg.max_epochs {
            train.shuffle(rng);
            for chunk in train.chunks(cfg.batch_size) {
                let mut g = Graph::new();
                let b = params.bind(&mut g);
                let z = logits(&mut g, &b, rows(chunk))?;
                let loss = g.bce_with_logits(z, &target(chunk))?;
                g.backward(loss)?;
                adam_step(&mut params, &b.gradients(&g), &mut state)?;
            }
            let Some(hx) = &hold_x else {
                best.1 = params.clone();
                continue;
            };
            let mut g = Graph::new();
            let b = params.bind_constants(&mut g);
            let z = logits(&mut g, &b, hx.clone())?;
            let loss = g.bce_with_logits(z, &hold_y)?;
            let loss = g.value(loss).data()[0];
            if loss < best.0 {
                best = (loss, params.clone());
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        Ok(Self {
            params: best.1,
            standardizer,
        })
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<bool>> {
        if x.is_empty() {
            return Ok(Vec::new());
        }
        let d = self.standardizer.mean.len();
        if let Some(r) = x.iter().find(|r| r.len() != d) {
            return Err(dim_err("mlp features", &[d], &[r.len()]));
        }
        let mut g = Graph::new();
        let b = self.params.bind_constants(&mut g);
        let z = logits(&mut g, &b, self.standardizer.apply(&x.iter().collect::<Vec<_>>()))?;
        Ok(g.value(z).data().iter().map(|&v| v > 0.0).collect())
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[bool]) -> Result<f64> {
        if x.is_empty() || x.len() != y.len() {
            return Err(dim_err("mlp accuracy", &[x.len()], &[y.len()]));
        }
        let correct = self.predict(x)?.iter().zip(y).filter(|(a, b)| a == b).count();
        Ok(correct as f64 / y.len() as f64)
    }
}
