use std::fmt;
use std::str::FromStr;

use crate::audiofeat::{BASE_DIM, DELTA_DIM};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Speech,
    Text,
}

/// Named hyperparameter presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Flickr8kSpeech,
    CocoSpeech,
    Flickr8kText,
    CocoText,
    /// Desk-scale configuration used by the tests and the synthetic pipeline.
    Micro,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Flickr8kSpeech,
        Preset::CocoSpeech,
        Preset::Flickr8kText,
        Preset::CocoText,
        Preset::Micro,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Flickr8kSpeech => "flickr8k-speech",
            Preset::CocoSpeech => "coco-speech",
            Preset::Flickr8kText => "flickr8k-text",
            Preset::CocoText => "coco-text",
            Preset::Micro => "micro",
        }
    }

    pub fn config(self) -> ModelConfig {
        let speech = |input_dim, stride, layers, hidden, attn| ModelConfig {
            kind: ModelKind::Speech,
            input_dim,
            conv_length: 6,
            conv_size: 64,
            conv_stride: stride,
            rhn_layers: layers,
            microsteps: 2,
            hidden_size: hidden,
            attn_hidden: attn,
            embed_dim: 0,
            vocab_size: 0,
            image_dim: 4096,
            residual: true,
        };
        let text = ModelConfig {
            kind: ModelKind::Text,
            input_dim: 0,
            conv_length: 0,
            conv_size: 0,
            conv_stride: 0,
            rhn_layers: 1,
            microsteps: 1,
            hidden_size: 1024,
            attn_hidden: 0,
            embed_dim: 300,
            vocab_size: 0,
            image_dim: 4096,
            residual: true,
        };
        match self {
            Preset::Flickr8kSpeech => speech(DELTA_DIM, 2, 4, 1024, 128),
            Preset::CocoSpeech => speech(BASE_DIM, 3, 5, 512, 512),
            Preset::Flickr8kText | Preset::CocoText => text,
            Preset::Micro => ModelConfig::micro(),
        }
    }

    /// Initial Adam learning rate.
    pub fn learning_rate(self) -> f64 {
        match self {
            Preset::Flickr8kText | Preset::CocoText => 0.001,
            _ => 0.0002,
        }
    }

    /// Whether audio features carry deltas (37 dims) and are truncated at 10 s.
    pub fn uses_deltas(self) -> bool {
        matches!(self, Preset::Flickr8kSpeech)
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset {s:?}")))
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Acoustic feature width `D` (13 or 37).
    pub input_dim: usize,
    /// Convolution length `s` in frames.
    pub conv_length: usize,
    /// Convolution channels `d`.
    pub conv_size: usize,
    /// Convolution stride `z`.
    pub conv_stride: usize,
    /// Stacked RHN layers `k`.
    pub rhn_layers: usize,
    /// Recurrence depth `L`.
    pub microsteps: usize,
    pub hidden_size: usize,
    pub attn_hidden: usize,
    pub embed_dim: usize,
    pub vocab_size: usize,
    pub image_dim: usize,
    pub residual: bool,
}

impl ModelConfig {
    pub fn micro() -> Self {
        Self {
            kind: ModelKind::Speech,
            input_dim: BASE_DIM,
            conv_length: 2,
            conv_size: 4,
            conv_stride: 1,
            rhn_layers: 2,
            microsteps: 2,
            hidden_size: 8,
            attn_hidden: 8,
            embed_dim: 0,
            vocab_size: 0,
            image_dim: 64,
            residual: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: usize, what: &str| {
            if v == 0 {
                Err(Error::Config(format!("{what} must be at least 1")))
            } else {
                Ok(())
            }
        };
        positive(self.rhn_layers, "rhn_layers")?;
        positive(self.microsteps, "microsteps")?;
        positive(self.hidden_size, "hidden_size")?;
        positive(self.image_dim, "image_dim")?;
        match self.kind {
            ModelKind::Speech => {
                positive(self.input_dim, "input_dim")?;
                positive(self.conv_length, "conv_length")?;
                positive(self.conv_size, "conv_size")?;
                positive(self.conv_stride, "conv_stride")?;
                positive(self.attn_hidden, "attn_hidden")?;
            }
            ModelKind::Text => {
                positive(self.embed_dim, "embed_dim")?;
                positive(self.vocab_size, "vocab_size")?;
            }
        }
        Ok(())
    }

    /// Width of the sequence entering the first RHN layer.
    pub fn rhn_input_dim(&self) -> usize {
        match self.kind {
            ModelKind::Speech => self.conv_size,
            ModelKind::Text => self.embed_dim,
        }
    }

    /// Encoded fields in checkpoint order under `meta.config`.
    pub(crate) fn to_meta(&self) -> Vec<f32> {
        [
            match self.kind {
                ModelKind::Speech => 0,
                ModelKind::Text => 1,
            },
            self.input_dim,
            self.conv_length,
            self.conv_size,
            self.conv_stride,
            self.rhn_layers,
            self.microsteps,
            self.hidden_size,
            self.attn_hidden,
            self.embed_dim,
            self.vocab_size,
            self.image_dim,
            usize::from(self.residual),
        ]
        .iter()
        .map(|&v| v as f32)
        .collect()
    }

    pub(crate) fn from_meta(v: &[f32]) -> Result<Self> {
        if v.len() != 13 || v.iter().any(|x| *x < 0.0 || x.fract() != 0.0) {
            return Err(Error::Format("meta.config must hold 13 non-negative integers".into()));
        }
        let u = |i: usize| v[i] as usize;
        let cfg = Self {
            kind: match u(0) {
                0 => ModelKind::Speech,
                1 => ModelKind::Text,
                k => return Err(Error::Format(format!("unknown model kind {k}"))),
            },
            input_dim: u(1),
            conv_length: u(2),
            conv_size: u(3),
            conv_stride: u(4),
            rhn_layers: u(5),
            microsteps: u(6),
            hidden_size: u(7),
            attn_hidden: u(8),
            embed_dim: u(9),
            vocab_size: u(10),
            image_dim: u(11),
            residual: u(12) != 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
