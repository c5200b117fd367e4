//! MFCC front end: 25 ms Hamming windows every 10 ms, 26 mel filters,
//! 12 cepstral coefficients plus log frame energy, optional deltas.

mod deltas;
mod mfcc;
mod signal;

pub use deltas::{add_deltas, delta};
pub use mfcc::{dct_coefficients, mel_to_hz, hz_to_mel, MelFilterbank, Mfcc};
pub use signal::{quantize, read_wav, truncate, write_wav, AudioSignal};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const SAMPLE_RATE: u32 = 16_000;
pub const FRAME_LENGTH_MS: usize = 25;
pub const FRAME_SHIFT_MS: usize = 10;
/// Samples per 25 ms window at 16 kHz.
pub const FRAME_LENGTH: usize = 400;
/// Samples per 10 ms hop at 16 kHz.
pub const FRAME_SHIFT: usize = 160;
pub const N_MELS: usize = 26;
pub const N_CEPS: usize = 12;
pub const PRE_EMPHASIS: f64 = 0.97;
pub const ENERGY_FLOOR: f64 = 1e-10;
pub const BASE_DIM: usize = N_CEPS + 1;
pub const DELTA_DIM: usize = BASE_DIM + 2 * N_CEPS;
/// Truncation applied to crowd-sourced recordings with runaway length.
pub const DEFAULT_TRUNCATE_MS: u32 = 10_000;

/// Time-major `T×D` acoustic features, `D` = 13 (plain) or 37 (with deltas).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    frames: Tensor<f32>,
}

impl FeatureMatrix {
    pub fn new(frames: Tensor<f32>) -> Result<Self> {
        let (t, d) = frames.dims2()?;
        if t == 0 || d == 0 {
            return Err(Error::EmptySequence("feature matrix"));
        }
        Ok(Self { frames })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        Self::new(Tensor::from_rows(rows)?)
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        self.frames.row(t)
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.frames
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.frames
    }

    pub fn frame_shift_ms(&self) -> usize {
        FRAME_SHIFT_MS
    }

    pub fn frame_length_ms(&self) -> usize {
        FRAME_LENGTH_MS
    }

    /// Per-dimension mean over the first `n` frames.
    pub fn mean_over(&self, n: usize) -> Vec<f32> {
        let n = n.clamp(1, self.num_frames());
        let d = self.dim();
        let mut acc = vec![0f64; d];
        for t in 0..n {
            for (a, &v) in acc.iter_mut().zip(self.frame(t)) {
                *a += f64::from(v);
            }
        }
        acc.into_iter().map(|a| (a / n as f64) as f32).collect()
    }
}

/// Number of whole 25 ms windows at 10 ms hop in `samples` samples.
pub fn frame_count(samples: usize) -> usize {
    if samples < FRAME_LENGTH {
        0
    } else {
        (samples - FRAME_LENGTH) / FRAME_SHIFT + 1
    }
}

/// Full front end: optional truncation, MFCC, optional deltas.
pub fn featurize(signal: &AudioSignal, with_deltas: bool, truncate_ms: Option<u32>) -> Result<FeatureMatrix> {
    let cut;
    let signal = match truncate_ms {
        Some(ms) => {
            cut = truncate(signal, ms)?;
            &cut
        }
        None => signal,
    };
    let base = Mfcc::default().compute(signal)?;
    if with_deltas {
        Ok(add_deltas(&base))
    } else {
        Ok(base)
    }
}
