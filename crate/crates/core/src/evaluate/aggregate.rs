//! Mean and sample standard deviation of metrics across seeds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::MetricsReport;

/// A metric in fraction units summarized over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> MetricSummary {
        let n = values.len();
        if n == 0 {
            return MetricSummary { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std =
            if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        MetricSummary { mean, std }
    }

    /// Percent with two decimals, e.g. `88.00 ± 2.00`.
    pub fn format(&self) -> String {
        format!("{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub accuracy: MetricSummary,
    pub macro_f1: MetricSummary,
    pub kappa: MetricSummary,
    pub n_runs: usize,
    pub single_run: bool,
    pub per_seed: Vec<MetricsReport>,
}

pub fn aggregate_seeds(reports: &[MetricsReport]) -> Result<SeedAggregate> {
    if reports.is_empty() {
        return Err(Error::Usage("cannot aggregate zero runs".into()));
    }
    let pick = |f: fn(&MetricsReport) -> f64| MetricSummary::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(SeedAggregate {
        accuracy: pick(|r| r.accuracy),
        macro_f1: pick(|r| r.macro_f1),
        kappa: pick(|r| r.kappa),
        n_runs: reports.len(),
        single_run: reports.len() == 1,
        per_seed: reports.to_vec(),
    })
}
