//! Confusion matrices, accuracy, macro F1 and Cohen's kappa.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{StageLabel, NUM_CLASSES};

use super::EpochPrediction;

pub type Confusion = [[u64; NUM_CLASSES]; NUM_CLASSES];

/// Rows are true stages, columns predicted stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub kappa: f64,
    pub per_class_f1: [f64; NUM_CLASSES],
    pub n_epochs: u64,
}

impl MetricsReport {
    /// Derives every scalar from the confusion matrix alone.
    pub fn from_confusion(confusion: Confusion) -> Result<MetricsReport> {
        let n: u64 = confusion.iter().flatten().sum();
        if n == 0 {
            return Err(Error::Usage("metrics need at least one prediction".into()));
        }
        let total = n as f64;
        let trace: u64 = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
        let row = |c: usize| confusion[c].iter().sum::<u64>();
        let col = |c: usize| (0..NUM_CLASSES).map(|r| confusion[r][c]).sum::<u64>();

        let mut per_class_f1 = [0.0; NUM_CLASSES];
        for (c, f1) in per_class_f1.iter_mut().enumerate() {
            let tp = confusion[c][c] as f64;
            let (support, predicted) = (row(c) as f64, col(c) as f64);
            if support == 0.0 {
                log::warn!("class {} has no support; its F1 counts as 0", StageLabel::from_index(c).unwrap());
            }
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = if support > 0.0 { tp / support } else { 0.0 };
            *f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        }
        let p_o = trace as f64 / total;
        let p_e = (0..NUM_CLASSES).map(|c| row(c) as f64 * col(c) as f64).sum::<f64>() / (total * total);
        let kappa = if p_e >= 1.0 { 1.0 } else { (p_o - p_e) / (1.0 - p_e) };
        Ok(MetricsReport {
            confusion,
            accuracy: p_o,
            macro_f1: per_class_f1.iter().sum::<f64>() / NUM_CLASSES as f64,
            kappa,
            per_class_f1,
            n_epochs: n,
        })
    }
}

/// Builds the confusion matrix from (true, predicted) pairs and scores it.
pub fn metrics_from_pairs(pairs: impl IntoIterator<Item = (StageLabel, StageLabel)>) -> Result<MetricsReport> {
    let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (truth, pred) in pairs {
        let (t, p) = match (truth.index(), pred.index()) {
            (Some(t), Some(p)) => (t, p),
            _ => return Err(Error::Input(format!("unscored label in prediction pair ({truth}, {pred})"))),
        };
        confusion[t][p] += 1;
    }
    MetricsReport::from_confusion(confusion)
}

pub fn compute_metrics(predictions: &[EpochPrediction]) -> Result<MetricsReport> {
    metrics_from_pairs(predictions.iter().map(|p| (p.truth, p.predicted)))
}
