//! Recording ingestion: EDF signals, recording bundles, dataset manifests
//! and subject-wise split assignment.

pub mod bundle;
pub mod edf;
pub mod manifest;
pub mod stage;

pub use bundle::{read_bundle, write_bundle};
pub use edf::{parse_edf, write_edf, EdfSignal};
pub use manifest::{assign_splits, Manifest, ManifestEntry, Split};
pub use stage::{StageLabel, NUM_CLASSES};

use crate::error::{Error, Result};

/// Duration of one scoring epoch in seconds.
pub const EPOCH_SECONDS: f64 = 30.0;

/// One continuous single-channel EEG recording with its hypnogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub recording_id: String,
    pub channel: String,
    pub sampling_rate_hz: f64,
    /// Microvolts.
    pub samples: Vec<f32>,
    /// One label per 30-s epoch from the start of `samples`.
    pub stages: Vec<StageLabel>,
}

impl Recording {
    /// Number of complete 30-s epochs covered by the samples.
    pub fn complete_epochs(&self) -> usize {
        (self.samples.len() as f64 / (EPOCH_SECONDS * self.sampling_rate_hz)).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate_hz > 0.0) || !self.sampling_rate_hz.is_finite() {
            return Err(Error::Integrity(format!(
                "recording {}: sampling rate {} is not positive",
                self.recording_id, self.sampling_rate_hz
            )));
        }
        if self.samples.is_empty() {
            return Err(Error::Integrity(format!("recording {} has no samples", self.recording_id)));
        }
        if self.stages.len() > self.complete_epochs() {
            return Err(Error::Integrity(format!(
                "recording {}: {} stage labels but only {} complete epochs",
                self.recording_id,
                self.stages.len(),
                self.complete_epochs()
            )));
        }
        Ok(())
    }

    /// Label counts over the five scoreable classes.
    pub fn stage_histogram(&self) -> [u64; NUM_CLASSES] {
        let mut h = [0u64; NUM_CLASSES];
        for s in &self.stages {
            if let Some(i) = s.index() {
                h[i] += 1;
            }
        }
        h
    }
}
