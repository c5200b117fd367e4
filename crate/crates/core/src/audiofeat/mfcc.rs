use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{
    frame_count, AudioSignal, FeatureMatrix, BASE_DIM, ENERGY_FLOOR, FRAME_LENGTH, FRAME_SHIFT, N_CEPS, N_MELS,
    PRE_EMPHASIS, SAMPLE_RATE,
};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

const FFT_SIZE: usize = 512;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale between 0 Hz and Nyquist.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    /// Left edge, center and right edge of each filter in Hz.
    edges: Vec<(f64, f64, f64)>,
    /// `weights[m][k]` for FFT bin `k`.
    weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fft_size: usize, sample_rate: u32) -> Self {
        let nyquist = f64::from(sample_rate) / 2.0;
        let top = hz_to_mel(nyquist);
        let points: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = fft_size / 2 + 1;
        let bin_hz = f64::from(sample_rate) / fft_size as f64;
        let mut edges = Vec::with_capacity(n_mels);
        let mut weights = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (l, c, r) = (points[m], points[m + 1], points[m + 2]);
            edges.push((l, c, r));
            weights.push(
                (0..n_bins)
                    .map(|k| triangle(k as f64 * bin_hz, l, c, r))
                    .collect(),
            );
        }
        Self { edges, weights }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges[m].1
    }

    pub fn edges(&self, m: usize) -> (f64, f64, f64) {
        self.edges[m]
    }

    /// Filter energies for a one-sided power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(power).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn triangle(f: f64, l: f64, c: f64, r: f64) -> f64 {
    if f <= l || f >= r {
        0.0
    } else if f <= c {
        (f - l) / (c - l)
    } else {
        (r - f) / (r - c)
    }
}

/// Orthonormal DCT-II coefficients `first..first+count` of `x`.
pub fn dct_coefficients(x: &[f64], first: usize, count: usize) -> Vec<f64> {
    let n = x.len() as f64;
    let scale = (2.0 / n).sqrt();
    (first..first + count)
        .map(|k| {
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// MFCC extractor with a reusable FFT plan.
pub struct Mfcc {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filterbank: MelFilterbank,
}

impl Default for Mfcc {
    fn default() -> Self {
        Self::new()
    }
}

impl Mfcc {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);
        let window = (0..FRAME_LENGTH)
            .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (FRAME_LENGTH - 1) as f64).cos())
            .collect();
        Self {
            fft,
            window,
            filterbank: MelFilterbank::new(N_MELS, FFT_SIZE, SAMPLE_RATE),
        }
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Log-floored mel filterbank energies, one row per frame.
    pub fn log_filterbank(&self, signal: &AudioSignal) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .frames(signal)?
            .into_iter()
            .map(|(_, fb)| fb.into_iter().map(|e| e.max(ENERGY_FLOOR).ln()).collect())
            .collect())
    }

    /// `T×13` matrix: cepstral coefficients 1..=12 and log frame energy.
    pub fn compute(&self, signal: &AudioSignal) -> Result<FeatureMatrix> {
        let frames = self.frames(signal)?;
        let t = frames.len();
        let mut data = Vec::with_capacity(t * BASE_DIM);
        for (energy, fb) in frames {
            let logs: Vec<f64> = fb.iter().map(|e| e.max(ENERGY_FLOOR).ln()).collect();
            data.extend(dct_coefficients(&logs, 1, N_CEPS).into_iter().map(|c| c as f32));
            data.push(energy.max(ENERGY_FLOOR).ln() as f32);
        }
        FeatureMatrix::new(Tensor::matrix(t, BASE_DIM, data)?)
    }

    /// Raw frame energy and filterbank energies per frame.
    fn frames(&self, signal: &AudioSignal) -> Result<Vec<(f64, Vec<f64>)>> {
        if signal.sample_rate() != SAMPLE_RATE {
            return Err(Error::SampleRate(signal.sample_rate()));
        }
        let x = signal.samples();
        let t = frame_count(x.len());
        if t == 0 {
            return Err(Error::TooShort {
                samples: x.len(),
                needed: FRAME_LENGTH,
            });
        }
        let emphasized: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let prev = if i == 0 { 0.0 } else { f64::from(x[i - 1]) };
                f64::from(v) - PRE_EMPHASIS * prev
            })
            .collect();
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
        let mut out = Vec::with_capacity(t);
        for f in 0..t {
            let start = f * FRAME_SHIFT;
            let energy: f64 = x[start..start + FRAME_LENGTH]
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum();
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, (b, w)) in buf.iter_mut().zip(&self.window).enumerate() {
                *b = Complex::new(emphasized[start + i] * w, 0.0);
            }
            self.fft.process(&mut buf);
            let power: Vec<f64> = buf[..FFT_SIZE / 2 + 1]
                .iter()
                .map(|c| c.norm_sqr() / FFT_SIZE as f64)
                .collect();
            out.push((energy, self.filterbank.apply(&power)));
        }
        Ok(out)
    }
}
