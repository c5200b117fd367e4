use super::FeatureMatrix;
use crate::numcore::Tensor;

const DELTA_WINDOW: usize = 2;

/// Regression deltas over a ±2 frame window with edge replication:
/// `d_t = Σ_n n (c_{t+n} − c_{t−n}) / (2 Σ_n n²)`.
pub fn delta(rows: &[Vec<f32>]) -> Vec<Vec<f32>> {
    let t = rows.len();
    let denom: f64 = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    (0..t)
        .map(|i| {
            let dim = rows[i].len();
            (0..dim)
                .map(|d| {
                    let mut acc = 0.0f64;
                    for n in 1..=DELTA_WINDOW {
                        let ahead = rows[(i + n).min(t - 1)][d];
                        let behind = rows[i.saturating_sub(n)][d];
                        acc += n as f64 * (f64::from(ahead) - f64::from(behind));
                    }
                    (acc / denom) as f32
                })
                .collect()
        })
        .collect()
}

/// Appends first and second order deltas of the cepstral block (every
/// column but the trailing log energy) to `T×13` features, giving `T×37`.
pub fn add_deltas(feats: &FeatureMatrix) -> FeatureMatrix {
    let dim = feats.dim();
    let ceps = dim.saturating_sub(1).max(1);
    let rows: Vec<Vec<f32>> = (0..feats.num_frames()).map(|t| feats.frame(t).to_vec()).collect();
    let cep_rows: Vec<Vec<f32>> = rows.iter().map(|r| r[..ceps].to_vec()).collect();
    let d1 = delta(&cep_rows);
    let d2 = delta(&d1);
    let width = dim + 2 * ceps;
    let mut data = Vec::with_capacity(rows.len() * width);
    for ((r, a), b) in rows.iter().zip(&d1).zip(&d2) {
        data.extend_from_slice(r);
        data.extend_from_slice(a);
        data.extend_from_slice(b);
    }
    let t = Tensor::matrix(rows.len(), width, data).expect("consistent delta shape");
    FeatureMatrix::new(t).expect("nonempty features")
}
