//! Leakage checks over a finished run: subject-wise splits, window
//! boundaries and one prediction per physical epoch.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ingest::{Manifest, Split};
use crate::preprocess::SequenceWindow;

use super::EpochPrediction;

/// Serializable trace of one window fed to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub dataset: String,
    pub split: Split,
    pub recording_id: String,
    /// `(recording_id, epoch_index)` of every member, in order.
    pub members: Vec<(String, usize)>,
}

impl WindowRecord {
    pub fn from_window(dataset: &str, split: Split, window: &SequenceWindow) -> Self {
        WindowRecord {
            dataset: dataset.to_string(),
            split,
            recording_id: window.recording_id.clone(),
            members: window.epochs.iter().map(|e| (e.recording_id.clone(), e.epoch_index)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub name: String,
    pub passed: bool,
    pub offenders: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const SUBJECT_SPLITS: &str = "subject_in_one_split";
pub const WINDOW_BOUNDARIES: &str = "windows_within_recording";
pub const UNIQUE_PREDICTIONS: &str = "one_prediction_per_epoch";

fn check(name: &str, offenders: Vec<String>) -> AuditCheck {
    AuditCheck { name: name.to_string(), passed: offenders.is_empty(), offenders }
}

/// Runs all three checks. Subjects are keyed by dataset, so identical ids in
/// different datasets are distinct people.
pub fn leakage_audit(manifests: &[Manifest], windows: &[WindowRecord], predictions: &[EpochPrediction]) -> AuditReport {
    // (a) every subject's assigned split plus every split it was used in
    let mut splits: BTreeMap<(String, String), BTreeSet<Split>> = BTreeMap::new();
    let mut owner: BTreeMap<(String, String), String> = BTreeMap::new();
    for m in manifests {
        for r in &m.recordings {
            owner.insert((m.dataset_name.clone(), r.recording_id.clone()), r.subject_id.clone());
            if let Some(s) = m.split_of(&r.subject_id) {
                splits.entry((m.dataset_name.clone(), r.subject_id.clone())).or_default().insert(s);
            }
        }
    }
    for w in windows {
        for (rec, _) in &w.members {
            if let Some(subject) = owner.get(&(w.dataset.clone(), rec.clone())) {
                splits.entry((w.dataset.clone(), subject.clone())).or_default().insert(w.split);
            }
        }
    }
    let spanning = splits
        .iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|((d, subj), s)| {
            let names: Vec<&str> = s.iter().map(|x| x.as_str()).collect();
            format!("{d}/{subj} in {}", names.join("+"))
        })
        .collect();

    // (b) members share the window's recording and run consecutively
    let crossing = windows
        .iter()
        .filter(|w| {
            w.members.iter().any(|(rec, _)| rec != &w.recording_id)
                || w.members.windows(2).any(|p| p[1].1 != p[0].1 + 1)
        })
        .map(|w| {
            let recs: BTreeSet<&str> = w.members.iter().map(|(r, _)| r.as_str()).collect();
            let start = w.members.first().map_or(0, |m| m.1);
            format!(
                "{}/{} window at {start} spans {}",
                w.dataset,
                w.recording_id,
                recs.into_iter().collect::<Vec<_>>().join(",")
            )
        })
        .collect();

    // (c) no duplicate prediction rows
    let mut seen = BTreeSet::new();
    let duplicated: BTreeSet<String> = predictions
        .iter()
        .filter(|p| !seen.insert((p.recording_id.as_str(), p.epoch_index)))
        .map(|p| format!("{} epoch {}", p.recording_id, p.epoch_index))
        .collect();

    AuditReport {
        checks: vec![
            check(SUBJECT_SPLITS, spanning),
            check(WINDOW_BOUNDARIES, crossing),
            check(UNIQUE_PREDICTIONS, duplicated.into_iter().collect()),
        ],
    }
}
