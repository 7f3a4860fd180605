//! Multi-run harnesses: the six-variant ablation and the all-pairs
//! cross-dataset comparison.

use crate::error::{Error, Result};
use crate::evaluate::{aggregate_seeds, AblationRow, AblationTable, MetricsReport, TransferCell, TransferTable};

use super::run::evaluate_windows;
use super::{train_run, DomainData, TrainConfig, Variant};

/// Trains `cfg.variant` once per seed and scores each best model on the
/// target test split.
pub fn seed_runs(source: &DomainData, target: &DomainData, cfg: &TrainConfig) -> Result<Vec<MetricsReport>> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("no seeds configured".into()));
    }
    if target.windows.test.is_empty() {
        return Err(Error::Config(format!("target {} has no test windows", target.name)));
    }
    cfg.seeds
        .iter()
        .map(|&seed| {
            let outcome = train_run(source, target, cfg, seed)?;
            evaluate_windows(&outcome.model, &target.windows.test, cfg.eval_batch)
        })
        .collect()
}

/// Every variant over every seed, in ablation-table row order.
pub fn ablation_suite(source: &DomainData, target: &DomainData, cfg: &TrainConfig) -> Result<AblationTable> {
    let rows = Variant::ALL
        .iter()
        .map(|&variant| {
            let run_cfg = TrainConfig { variant, ..cfg.clone() };
            let reports = seed_runs(source, target, &run_cfg)?;
            Ok(AblationRow {
                components: variant.components().to_string(),
                variant: variant.as_str().to_string(),
                aggregate: aggregate_seeds(&reports)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { source: source.name.clone(), target: target.name.clone(), seeds: cfg.seeds.clone(), rows })
}

/// Every ordered (source, target) pair of distinct datasets.
pub fn transfer_matrix(datasets: &[DomainData], cfg: &TrainConfig) -> Result<TransferTable> {
    if datasets.len() < 2 {
        return Err(Error::Config("a transfer matrix needs at least two datasets".into()));
    }
    let mut cells = Vec::new();
    for s in datasets {
        for t in datasets {
            if s.name == t.name {
                continue;
            }
            let reports = seed_runs(s, t, cfg)?;
            cells.push(TransferCell {
                source: s.name.clone(),
                target: t.name.clone(),
                aggregate: aggregate_seeds(&reports)?,
            });
        }
    }
    Ok(TransferTable { variant: cfg.variant.as_str().to_string(), seeds: cfg.seeds.clone(), cells })
}
