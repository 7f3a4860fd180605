//! Spectrogram epochs and fixed-length sequence windows over them.

use std::sync::Arc;

use crate::ingest::StageLabel;

use super::{FREQ_BINS, TIME_FRAMES};

/// One normalized 76 x 60 spectrogram with its scored label.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramEpoch {
    /// Row-major, frequency rows by time columns.
    pub matrix: Vec<f32>,
    pub label: StageLabel,
    pub epoch_index: usize,
    pub recording_id: String,
}

impl SpectrogramEpoch {
    pub fn is_well_formed(&self) -> bool {
        self.matrix.len() == FREQ_BINS * TIME_FRAMES
            && self.matrix.iter().all(|v| v.is_finite())
            && self.label.is_scoreable()
    }
}

/// `L` consecutive epochs of one recording.
#[derive(Debug, Clone)]
pub struct SequenceWindow {
    pub epochs: Vec<Arc<SpectrogramEpoch>>,
    pub recording_id: String,
    pub start_epoch_index: usize,
}

impl SequenceWindow {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn labels(&self) -> Vec<StageLabel> {
        self.epochs.iter().map(|e| e.label).collect()
    }

    /// Class indices of the members.
    pub fn targets(&self) -> Vec<usize> {
        self.epochs.iter().map(|e| e.label.index().expect("windows hold scored epochs")).collect()
    }

    pub fn epoch_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.epochs.iter().map(|e| e.epoch_index)
    }
}

/// Splits epochs (sorted by index within each recording) into windows of
/// `len` consecutive epochs, starting every `stride` epochs from the start of
/// each contiguous run. Windows never cross a recording boundary or a gap.
pub fn make_windows(epochs: &[Arc<SpectrogramEpoch>], len: usize, stride: usize) -> Vec<SequenceWindow> {
    assert!(len > 0 && stride > 0, "window length and stride must be positive");
    let mut windows = Vec::new();
    let mut run_start = 0;
    for i in 1..=epochs.len() {
        let breaks = i == epochs.len()
            || epochs[i].recording_id != epochs[i - 1].recording_id
            || epochs[i].epoch_index != epochs[i - 1].epoch_index + 1;
        if !breaks {
            continue;
        }
        let run = &epochs[run_start..i];
        let mut s = 0;
        while s + len <= run.len() {
            let members = run[s..s + len].to_vec();
            windows.push(SequenceWindow {
                recording_id: members[0].recording_id.clone(),
                start_epoch_index: members[0].epoch_index,
                epochs: members,
            });
            s += stride;
        }
        run_start = i;
    }
    windows
}
