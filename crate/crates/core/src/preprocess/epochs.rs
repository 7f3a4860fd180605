//! Epoch segmentation, wake trimming and per-epoch normalization.

use crate::error::{Error, Result};
use crate::ingest::{Recording, StageLabel, EPOCH_SECONDS};

/// Wake epochs kept on either side of the sleep period (30 minutes).
pub const WAKE_MARGIN_EPOCHS: usize = 60;

/// One scored 30-second epoch of raw samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEpoch {
    /// Position in the recording's stage list.
    pub index: usize,
    pub label: StageLabel,
    pub samples: Vec<f32>,
}

/// Cuts a 100 Hz recording into non-overlapping epochs, dropping unscored
/// epochs, epochs without a label and the trailing partial epoch.
pub fn segment_epochs(rec: &Recording) -> Result<Vec<RawEpoch>> {
    if (rec.sampling_rate_hz - super::TARGET_RATE_HZ).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "segmentation expects {} Hz input, recording {} is at {} Hz",
            super::TARGET_RATE_HZ,
            rec.recording_id,
            rec.sampling_rate_hz
        )));
    }
    let len = (EPOCH_SECONDS * super::TARGET_RATE_HZ) as usize;
    Ok(rec
        .samples
        .chunks_exact(len)
        .zip(&rec.stages)
        .enumerate()
        .filter(|(_, (_, label))| label.is_scoreable())
        .map(|(index, (samples, &label))| RawEpoch { index, label, samples: samples.to_vec() })
        .collect())
}

/// Index range `[start, end]` (inclusive, in epoch-index units) to keep so
/// that at most `margin` wake epochs flank the sleep period. `None` when the
/// input has no sleep epochs.
pub fn sleep_window(indexed_labels: &[(usize, StageLabel)], margin: usize) -> Option<(usize, usize)> {
    let first = indexed_labels.iter().find(|(_, l)| *l != StageLabel::W)?.0;
    let last = indexed_labels.iter().rev().find(|(_, l)| *l != StageLabel::W)?.0;
    Some((first.saturating_sub(margin), last + margin))
}

/// Drops wake epochs further than [`WAKE_MARGIN_EPOCHS`] from the first and
/// last sleep epoch and re-indexes the survivors from the first kept epoch.
/// All-wake input is returned unchanged.
pub fn trim_wake(epochs: Vec<RawEpoch>) -> Vec<RawEpoch> {
    trim_wake_with_margin(epochs, WAKE_MARGIN_EPOCHS)
}

pub fn trim_wake_with_margin(epochs: Vec<RawEpoch>, margin: usize) -> Vec<RawEpoch> {
    let labels: Vec<_> = epochs.iter().map(|e| (e.index, e.label)).collect();
    let Some((start, end)) = sleep_window(&labels, margin) else {
        return epochs;
    };
    let kept: Vec<RawEpoch> = epochs.into_iter().filter(|e| e.index >= start && e.index <= end).collect();
    let base = kept.first().map_or(0, |e| e.index);
    kept.into_iter().map(|e| RawEpoch { index: e.index - base, ..e }).collect()
}

/// Zero mean, unit (population) standard deviation; near-constant input
/// becomes all zeros.
pub fn zscore(samples: &[f32]) -> Vec<f32> {
    let n = samples.len().max(1) as f64;
    let mean = samples.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = samples.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        return vec![0.0; samples.len()];
    }
    samples.iter().map(|&v| ((v as f64 - mean) / std) as f32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use StageLabel::*;

    fn rec(n_samples: usize, stages: Vec<StageLabel>) -> Recording {
        Recording {
            subject_id: "s".into(),
            recording_id: "r".into(),
            channel: "Fpz-Cz".into(),
            sampling_rate_hz: 100.0,
            samples: (0..n_samples).map(|i| i as f32).collect(),
            stages,
        }
    }

    fn labelled(labels: &[StageLabel]) -> Vec<RawEpoch> {
        labels.iter().enumerate().map(|(index, &label)| RawEpoch { index, label, samples: vec![] }).collect()
    }

    #[test]
    fn segmentation_counts() {
        assert_eq!(segment_epochs(&rec(3000, vec![W])).unwrap().len(), 1);
        let e = segment_epochs(&rec(9500, vec![W, N1, N2])).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e[2].samples[0], 6000.0);
        assert_eq!(e[2].samples.len(), 3000);
        // more labels than complete epochs
        assert_eq!(segment_epochs(&rec(6000, vec![W, W, W, W])).unwrap().len(), 2);
        assert!(segment_epochs(&rec(0, vec![])).unwrap().is_empty());
    }

    #[test]
    fn unknown_epochs_are_dropped() {
        let e = segment_epochs(&rec(9000, vec![W, Unknown, N2])).unwrap();
        assert_eq!(e.iter().map(|e| e.index).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(e[1].samples[0], 6000.0);
    }

    #[test]
    fn segmentation_requires_target_rate() {
        let mut r = rec(3000, vec![W]);
        r.sampling_rate_hz = 128.0;
        assert!(matches!(segment_epochs(&r), Err(Error::Config(_))));
    }

    #[test]
    fn trims_long_wake_margins() {
        let mut labels = vec![W; 100];
        labels.extend(vec![N2; 10]);
        labels.extend(vec![W; 100]);
        let out = trim_wake(labelled(&labels));
        assert_eq!(out.len(), 130);
        assert_eq!(out[0].index, 0);
        assert_eq!(out[129].index, 129);
        assert_eq!(sleep_window(&labels.iter().copied().enumerate().collect::<Vec<_>>(), 60), Some((40, 169)));
    }

    #[test]
    fn short_wake_margins_untouched() {
        let mut labels = vec![W; 10];
        labels.push(N2);
        labels.extend(vec![W; 10]);
        assert_eq!(trim_wake(labelled(&labels)), labelled(&labels));
        assert_eq!(trim_wake(labelled(&[W; 200])), labelled(&[W; 200]));
    }

    #[test]
    fn zscore_edge_cases() {
        assert!(zscore(&[3.5; 3000]).iter().all(|v| *v == 0.0));
        let x: Vec<f32> = (0..3000).map(|i| ((i * 7919) % 113) as f32).collect();
        let z = zscore(&x);
        let mean = z.iter().map(|&v| v as f64).sum::<f64>() / 3000.0;
        let std = (z.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 3000.0).sqrt();
        assert!(mean.abs() < 1e-6 && (std - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn zscore_is_affine_invariant(x in prop::collection::vec(-100.0f32..100.0, 3000), a in 0.01f32..50.0, b in -100.0f32..100.0) {
            let z1 = zscore(&x);
            let y: Vec<f32> = x.iter().map(|v| a * v + b).collect();
            let z2 = zscore(&y);
            for (p, q) in z1.iter().zip(&z2) {
                prop_assert!((p - q).abs() < 1e-3, "{} vs {}", p, q);
            }
        }
    }
}
