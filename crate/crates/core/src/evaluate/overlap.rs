//! Per-epoch predictions from overlapping window logits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{StageLabel, NUM_CLASSES};
use crate::preprocess::SequenceWindow;

/// Logits for every member of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowLogits {
    pub recording_id: String,
    pub start_epoch_index: usize,
    pub labels: Vec<StageLabel>,
    /// Row-major `labels.len() x NUM_CLASSES`.
    pub logits: Vec<f32>,
}

impl WindowLogits {
    pub fn from_window(window: &SequenceWindow, logits: Vec<f32>) -> Self {
        WindowLogits {
            recording_id: window.recording_id.clone(),
            start_epoch_index: window.start_epoch_index,
            labels: window.labels(),
            logits,
        }
    }
}

/// The single prediction for one physical epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPrediction {
    pub recording_id: String,
    pub epoch_index: usize,
    pub averaged_logits: [f32; NUM_CLASSES],
    pub predicted: StageLabel,
    #[serde(rename = "true")]
    pub truth: StageLabel,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Averages each epoch's logits over every window covering it and takes the
/// argmax. Output is sorted by recording id, then epoch index.
pub fn overlap_average(windows: &[WindowLogits]) -> Result<Vec<EpochPrediction>> {
    struct Acc {
        sum: [f64; NUM_CLASSES],
        count: usize,
        label: StageLabel,
    }
    let mut acc: BTreeMap<(&str, usize), Acc> = BTreeMap::new();
    for w in windows {
        if w.logits.len() != w.labels.len() * NUM_CLASSES {
            return Err(Error::shape(
                format!("{} x {NUM_CLASSES} logits", w.labels.len()),
                format!("{} values", w.logits.len()),
            ));
        }
        for (k, (&label, row)) in w.labels.iter().zip(w.logits.chunks_exact(NUM_CLASSES)).enumerate() {
            let key = (w.recording_id.as_str(), w.start_epoch_index + k);
            let entry = acc.entry(key).or_insert(Acc { sum: [0.0; NUM_CLASSES], count: 0, label });
            if entry.label != label {
                return Err(Error::Integrity(format!(
                    "recording {} epoch {}: windows disagree on the true label ({} vs {})",
                    key.0, key.1, entry.label, label
                )));
            }
            for (s, &v) in entry.sum.iter_mut().zip(row) {
                *s += v as f64;
            }
            entry.count += 1;
        }
    }
    Ok(acc
        .into_iter()
        .map(|((rec, idx), a)| {
            let mut averaged = [0.0f32; NUM_CLASSES];
            for (o, s) in averaged.iter_mut().zip(a.sum) {
                *o = (s / a.count as f64) as f32;
            }
            EpochPrediction {
                recording_id: rec.to_string(),
                epoch_index: idx,
                averaged_logits: averaged,
                predicted: StageLabel::from_index(argmax(&averaged)).unwrap(),
                truth: a.label,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use StageLabel::*;

    fn window(start: usize, rows: Vec<[f32; 5]>) -> WindowLogits {
        WindowLogits {
            recording_id: "r".into(),
            start_epoch_index: start,
            labels: vec![N2; rows.len()],
            logits: rows.concat(),
        }
    }

    #[test]
    fn single_cover_passes_logits_through() {
        let p = overlap_average(&[window(3, vec![[0.1, 0.9, -1.0, 2.0, 0.0]])]).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].epoch_index, 3);
        assert_eq!(p[0].averaged_logits, [0.1, 0.9, -1.0, 2.0, 0.0]);
        assert_eq!(p[0].predicted, N3);
    }

    #[test]
    fn ties_break_low() {
        let a = window(0, vec![[1.0, 0.0, 0.0, 0.0, 0.0]]);
        let b = window(0, vec![[0.0, 1.0, 0.0, 0.0, 0.0]]);
        let p = overlap_average(&[a, b]).unwrap();
        assert_eq!(p[0].averaged_logits, [0.5, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(p[0].predicted, W);
    }

    #[test]
    fn conflicting_labels_fail() {
        let a = window(0, vec![[0.0; 5]]);
        let mut b = window(0, vec![[0.0; 5]]);
        b.labels[0] = Rem;
        assert!(matches!(overlap_average(&[a, b]), Err(Error::Integrity(_))));
    }

    #[test]
    fn bad_logit_length_is_a_shape_error() {
        let mut a = window(0, vec![[0.0; 5]]);
        a.logits.pop();
        assert!(matches!(overlap_average(&[a]), Err(Error::Shape { .. })));
    }
}
