use std::path::Path;

use super::SAMPLE_RATE;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::SampleRate(sample_rate));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NumericFault {
                location: format!("audio sample {i}"),
            });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / f64::from(self.sample_rate)
    }
}

/// Cuts the signal to at most `max_ms` milliseconds.
pub fn truncate(signal: &AudioSignal, max_ms: u32) -> Result<AudioSignal> {
    if max_ms == 0 {
        return Err(Error::Config("truncation length must be positive".into()));
    }
    let max = (u64::from(max_ms) * u64::from(signal.sample_rate) / 1000) as usize;
    let mut out = signal.clone();
    out.samples.truncate(max);
    Ok(out)
}

/// Reads 16-bit PCM mono WAV at 16 kHz, scaling samples to [-1, 1).
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| Error::MissingResource(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Config(format!(
            "{}: expected 16-bit PCM mono, got {} channel(s), {} bits",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRate(spec.sample_rate));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| f32::from(v) / 32768.0))
        .collect::<Result<Vec<_>, _>>()?;
    AudioSignal::new(samples, spec.sample_rate)
}

/// Nearest 16-bit PCM level, in the scale used by [`read_wav`].
pub fn quantize(x: f32) -> f32 {
    f32::from(pcm16(x)) / 32768.0
}

fn pcm16(x: f32) -> i16 {
    (f64::from(x) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes 16-bit PCM mono WAV, clipping samples to the PCM range.
/// Samples already on the PCM grid (see [`quantize`]) round-trip exactly.
pub fn write_wav(path: impl AsRef<Path>, signal: &AudioSignal) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in &signal.samples {
        w.write_sample(pcm16(s))?;
    }
    w.finalize()?;
    Ok(())
}
