//! Loop-based reference implementations used as test oracles. Nothing here
//! touches the computation graph.
#![allow(dead_code)]

use groundspeech::model::ModelConfig;
use groundspeech::numcore::{Params, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

pub fn to_rows(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    let (r, _) = t.dims2().unwrap();
    (0..r).map(|i| t.row(i).to_vec()).collect()
}

pub fn matvec(m: &Tensor<f64>, x: &[f64]) -> Vec<f64> {
    let (r, c) = m.dims2().unwrap();
    assert_eq!(c, x.len());
    (0..r)
        .map(|i| (0..c).map(|j| m.data()[i * c + j] * x[j]).sum())
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter().map(|a| a / n).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Brute-force full-padding convolution: `K[a][e][c]`.
pub fn conv_ref(x: &[Vec<f64>], k: &Tensor<f64>, b: &[f64], stride: usize) -> Vec<Vec<f64>> {
    let (s, d_in, d_out) = (k.shape()[0], k.shape()[1], k.shape()[2]);
    let t = x.len();
    let mut padded = vec![vec![0.0; d_in]; s - 1];
    padded.extend(x.iter().cloned());
    padded.extend(vec![vec![0.0; d_in]; s - 1]);
    let mut out = Vec::new();
    let mut start = 0;
    while start + s <= padded.len() {
        let mut row = b.to_vec();
        for a in 0..s {
            for (e, &xe) in padded[start + a].iter().enumerate() {
                for (c, r) in row.iter_mut().enumerate() {
                    *r += xe * k.data()[(a * d_in + e) * d_out + c];
                }
            }
        }
        out.push(row);
        start += stride;
    }
    assert_eq!(out.len(), (t + s - 2) / stride + 1);
    out
}

/// One RHN layer `rhn{n}` with zero initial state.
pub fn rhn_layer_ref(p: &Params<f64>, n: usize, microsteps: usize, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let get = |s: String| p.get(&format!("rhn{n}.{s}")).unwrap().clone();
    let w_h = get("H.W".into());
    let w_t = get("T.W".into());
    let hidden = w_h.shape()[0];
    let mut s = vec![0.0; hidden];
    let mut out = Vec::new();
    for xt in x {
        for l in 1..=microsteps {
            let u_h = get(format!("H.U{l}"));
            let u_t = get(format!("T.U{l}"));
            let b_h = get(format!("H.b{l}"));
            let b_t = get(format!("T.b{l}"));
            let mut pre_h = matvec(&u_h, &s);
            let mut pre_t = matvec(&u_t, &s);
            if l == 1 {
                let xh = matvec(&w_h, xt);
                let xtt = matvec(&w_t, xt);
                for i in 0..hidden {
                    pre_h[i] += xh[i];
                    pre_t[i] += xtt[i];
                }
            }
            s = (0..hidden)
                .map(|i| {
                    let h = (pre_h[i] + b_h.data()[i]).tanh();
                    let t = sigmoid(pre_t[i] + b_t.data()[i]);
                    h * t + s[i] * (1.0 - t)
                })
                .collect();
        }
        out.push(s.clone());
    }
    out
}

pub fn rhn_stack_ref(p: &Params<f64>, cfg: &ModelConfig, x: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    let mut input = x.to_vec();
    let mut layers = Vec::new();
    for n in 1..=cfg.rhn_layers {
        let mut out = rhn_layer_ref(p, n, cfg.microsteps, &input);
        if cfg.residual && input[0].len() == out[0].len() {
            for (o, i) in out.iter_mut().zip(&input) {
                for (a, b) in o.iter_mut().zip(i) {
                    *a += b;
                }
            }
        }
        layers.push(out.clone());
        input = out;
    }
    layers
}

/// Attention weights and pooled vector over the first `valid` rows.
pub fn attention_ref(p: &Params<f64>, h: &[Vec<f64>], valid: usize) -> (Vec<f64>, Vec<f64>) {
    let w = p.get("attn.W").unwrap();
    let u = p.get("attn.U").unwrap();
    let logits: Vec<f64> = h[..valid]
        .iter()
        .map(|ht| {
            let a: Vec<f64> = matvec(w, ht).into_iter().map(f64::tanh).collect();
            dot(u.data(), &a)
        })
        .collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    let alpha: Vec<f64> = e.iter().map(|v| v / z).collect();
    let mut pooled = vec![0.0; h[0].len()];
    for (a, ht) in alpha.iter().zip(h) {
        for (p, v) in pooled.iter_mut().zip(ht) {
            *p += a * v;
        }
    }
    (alpha, pooled)
}

/// Full speech encoder: embedding and per-layer activations.
pub fn encode_utterance_ref(p: &Params<f64>, cfg: &ModelConfig, x: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<Vec<f64>>>) {
    let conv = conv_ref(x, p.get("conv.K").unwrap(), p.get("conv.b").unwrap().data(), cfg.conv_stride);
    let layers = rhn_stack_ref(p, cfg, &conv);
    let top = layers.last().unwrap();
    let (_, pooled) = attention_ref(p, top, top.len());
    (normalize(&pooled), layers)
}

pub fn encode_image_ref(p: &Params<f64>, i: &[f64]) -> Vec<f64> {
    let mut v = matvec(p.get("img.A").unwrap(), i);
    for (a, b) in v.iter_mut().zip(p.get("img.b").unwrap().data()) {
        *a += b;
    }
    normalize(&v)
}

/// Four nested loops over (u, i, u', i') evaluating the bidirectional hinge loss.
pub fn contrastive_loss_ref(u: &[Vec<f64>], i: &[Vec<f64>], margin: f64) -> f64 {
    let d = |a: &[f64], b: &[f64]| 1.0 - dot(a, b);
    let n = u.len();
    let mut total = 0.0;
    for j in 0..n {
        for uj in 0..n {
            for ij in 0..n {
                if uj != j && ij == j {
                    total += (margin + d(&u[j], &i[j]) - d(&u[uj], &i[j])).max(0.0);
                }
                if ij != j && uj == j {
                    total += (margin + d(&u[j], &i[j]) - d(&u[j], &i[ij])).max(0.0);
                }
            }
        }
    }
    total
}

/// Rank of each gold image by sorting all images per query.
pub fn ranks_by_sort(u: &[Vec<f64>], imgs: &[Vec<f64>], gold: &[usize]) -> Vec<usize> {
    u.iter()
        .zip(gold)
        .map(|(q, &g)| {
            let mut order: Vec<(f64, usize)> = imgs.iter().enumerate().map(|(k, im)| (1.0 - dot(q, im), k)).collect();
            order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            order.iter().position(|&(_, k)| k == g).unwrap() + 1
        })
        .collect()
}

pub fn random_unit_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| normalize(&(0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
        .collect()
}

/// Random speech samples with distinct images, for shape-level training tests.
pub fn random_speech_samples(
    rng: &mut ChaCha8Rng,
    n: usize,
    cfg: &ModelConfig,
) -> Vec<groundspeech::corpus::Sample> {
    use groundspeech::audiofeat::FeatureMatrix;
    use groundspeech::model::Utterance;
    (0..n)
        .map(|k| {
            let frames = rng.random_range(3..9);
            let rows: Vec<Vec<f32>> = (0..frames)
                .map(|_| (0..cfg.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            groundspeech::corpus::Sample {
                id: format!("u{k}"),
                image_id: format!("i{k}"),
                words: vec![],
                utterance: Utterance::Speech(FeatureMatrix::from_rows(&rows).unwrap()),
                image: (0..cfg.image_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            }
        })
        .collect()
}

/// Random orthogonal matrix by Gram-Schmidt on Gaussian-ish columns.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for b in &basis {
            let p = dot(&v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
        if dot(&v, &v) > 1e-6 {
            basis.push(normalize(&v));
        }
    }
    basis
}
