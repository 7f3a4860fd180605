//! Per-domain window sets split by subject.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ingest::{Manifest, Split, NUM_CLASSES};
use crate::preprocess::{
    make_windows, read_cache_dir, PreprocessedRecording, SequenceWindow, WINDOW_EPOCHS, WINDOW_STRIDE,
};

#[derive(Debug, Clone, Default)]
pub struct SplitWindows {
    pub train: Vec<SequenceWindow>,
    pub val: Vec<SequenceWindow>,
    pub test: Vec<SequenceWindow>,
}

impl SplitWindows {
    pub fn get(&self, split: Split) -> &[SequenceWindow] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut Vec<SequenceWindow> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }
}

/// One dataset's windows, grouped by the manifest's subject-wise split.
#[derive(Debug, Clone)]
pub struct DomainData {
    pub name: String,
    pub manifest: Manifest,
    pub windows: SplitWindows,
}

impl DomainData {
    /// Windows every included recording and files it under its subject's
    /// split. Recordings missing from the manifest are an integrity error.
    pub fn from_recordings(manifest: Manifest, recordings: Vec<PreprocessedRecording>) -> Result<Self> {
        let mut windows = SplitWindows::default();
        for rec in recordings {
            let entry = manifest.recordings.iter().find(|e| e.recording_id == rec.recording_id).ok_or_else(|| {
                Error::Integrity(format!("recording {} is not in manifest {}", rec.recording_id, manifest.dataset_name))
            })?;
            if !entry.include {
                continue;
            }
            let split = manifest
                .split_of(&entry.subject_id)
                .ok_or_else(|| Error::Integrity(format!("subject {} has no split", entry.subject_id)))?;
            let epochs: Vec<_> = rec.epochs.into_iter().map(Arc::new).collect();
            windows.get_mut(split).extend(make_windows(&epochs, WINDOW_EPOCHS, WINDOW_STRIDE));
        }
        Ok(DomainData { name: manifest.dataset_name.clone(), manifest, windows })
    }

    /// Loads a preprocessed domain directory: `manifest.json` beside the
    /// cached recordings.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Manifest::load(&dir.join("manifest.json"))?;
        let recordings = read_cache_dir(dir)?;
        if recordings.is_empty() {
            return Err(Error::Input(format!("no cached recordings in {}", dir.display())));
        }
        Self::from_recordings(manifest, recordings)
    }

    /// Label counts over the distinct epochs of the training windows.
    pub fn train_label_counts(&self) -> [u64; NUM_CLASSES] {
        let mut seen = std::collections::BTreeSet::new();
        let mut counts = [0u64; NUM_CLASSES];
        for w in &self.windows.train {
            for e in &w.epochs {
                if seen.insert((e.recording_id.as_str(), e.epoch_index)) {
                    counts[e.label.index().unwrap()] += 1;
                }
            }
        }
        counts
    }
}
