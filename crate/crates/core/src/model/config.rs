use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{FREQ_BINS, TIME_FRAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// `(channels, frequency bins, time frames)` of one input spectrogram.
    pub in_shape: (usize, usize, usize),
    pub feature_dim: usize,
    pub channel_widths: [usize; 4],
    pub dropout: f32,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            in_shape: (1, FREQ_BINS, TIME_FRAMES),
            feature_dim: 128,
            channel_widths: [48, 96, 160, 160],
            dropout: 0.3,
        }
    }
}

impl EncoderConfig {
    pub fn with_widths(channel_widths: [usize; 4]) -> Self {
        Self { channel_widths, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_shape.0 != 1 || self.in_shape.1 == 0 || self.in_shape.2 == 0 {
            return Err(Error::Config(format!("unsupported input shape {:?}", self.in_shape)));
        }
        if self.feature_dim == 0 || self.channel_widths.contains(&0) {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Which optional components a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// BiLSTM sequence classifier; otherwise a per-epoch linear head on the
    /// encoder features.
    pub temporal: bool,
    pub auxiliary: bool,
    pub adversarial: bool,
}

impl Architecture {
    pub const FULL: Architecture = Architecture { temporal: true, auxiliary: true, adversarial: true };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub architecture: Architecture,
    pub num_classes: usize,
    pub aux_hidden: usize,
    pub aux_dropout: f32,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub disc_hidden: [usize; 2],
    pub disc_dropout: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            architecture: Architecture::FULL,
            num_classes: crate::ingest::NUM_CLASSES,
            aux_hidden: 128,
            aux_dropout: 0.3,
            lstm_hidden: 128,
            lstm_layers: 2,
            disc_hidden: [128, 64],
            disc_dropout: 0.3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.num_classes < 2 || self.aux_hidden == 0 || self.lstm_hidden == 0 || self.lstm_layers == 0 {
            return Err(Error::Config("model widths must be positive".into()));
        }
        if self.disc_hidden.contains(&0) {
            return Err(Error::Config("discriminator widths must be positive".into()));
        }
        for rate in [self.aux_dropout, self.disc_dropout] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("dropout {rate} outside [0, 1)")));
            }
        }
        Ok(())
    }
}
