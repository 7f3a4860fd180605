//! The epoch loop: paired batches, per-epoch adaptation weight, validation,
//! early stopping and a JSON-lines training log.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{compute_metrics, predict, MetricsReport};
use crate::model::ModelState;
use crate::nn::optim::Adam;
use crate::nn::{Module, Rng};
use crate::preprocess::SequenceWindow;

use super::step::{joint_step, unlabelled, Batch, LossBreakdown};
use super::{class_weights, lambda_schedule, ClassWeights, DomainData, EarlyStop, TrainConfig};

const DATA_STREAM: u64 = 1;
const TARGET_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lambda: f64,
    pub loss_main: f64,
    pub loss_aux: f64,
    pub loss_adv: f64,
    pub loss_total: f64,
    pub steps: usize,
    pub skipped_steps: usize,
    pub val_domain: String,
    pub val_accuracy: f64,
    pub val_mf1: f64,
    pub val_kappa: f64,
    pub improved: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: ModelState,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mf1: f64,
    pub class_weights: ClassWeights,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Endless shuffled walk over target windows, reshuffled on every pass.
struct Cycle<'a> {
    items: &'a [SequenceWindow],
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl<'a> Cycle<'a> {
    fn new(items: &'a [SequenceWindow], rng: ChaCha8Rng) -> Self {
        Cycle { items, order: Vec::new(), pos: 0, rng }
    }

    fn take(&mut self, n: usize) -> Vec<&'a SequenceWindow> {
        (0..n)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.order = (0..self.items.len()).collect();
                    self.order.shuffle(&mut self.rng);
                    self.pos = 0;
                }
                self.pos += 1;
                &self.items[self.order[self.pos - 1]]
            })
            .collect()
    }
}

/// Scores `model` on `windows` with overlap-averaged predictions.
pub fn evaluate_windows(model: &ModelState, windows: &[SequenceWindow], batch: usize) -> Result<MetricsReport> {
    compute_metrics(&predict(model, windows, batch)?)
}

/// Trains one model from `seed`. Target windows feed only the adversarial
/// term; their labels are read solely when target validation drives early
/// stopping.
pub fn train_run(source: &DomainData, target: &DomainData, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let arch = cfg.variant.architecture();
    let src_train = &source.windows.train;
    if src_train.is_empty() {
        return Err(Error::Config(format!("source {} has no training windows", source.name)));
    }
    if arch.adversarial && target.windows.train.is_empty() {
        return Err(Error::Config(format!("target {} has no training windows", target.name)));
    }
    let (val_domain, val_windows) = match cfg.early_stop_metric {
        EarlyStop::TargetValMf1 => (&target.name, &target.windows.val),
        EarlyStop::SourceValMf1 => (&source.name, &source.windows.val),
    };
    if val_windows.is_empty() {
        return Err(Error::Config(format!("{val_domain} has no validation windows")));
    }
    let weights = class_weights(source.train_label_counts())?;

    let mut model = ModelState::new(&cfg.model_config(), seed)?;
    let mut optim = Adam::new(cfg.learning_rate as f32);
    let mut data_rng = stream(seed, DATA_STREAM);
    let mut dropout_rng: Rng = stream(seed, DROPOUT_STREAM);
    let mut targets = Cycle::new(&target.windows.train, stream(seed, TARGET_STREAM));

    let mut log = Vec::new();
    let mut best: Option<(usize, f64, ModelState)> = None;
    let mut since_best = 0;
    for epoch in 0..cfg.total_epochs {
        let started = Instant::now();
        let lambda = match cfg.lambda_override {
            Some(l) => l,
            None => lambda_schedule(epoch as f64 / cfg.total_epochs as f64)?,
        };
        model.set_lambda(lambda)?;
        let mut order: Vec<usize> = (0..src_train.len()).collect();
        order.shuffle(&mut data_rng);
        let mut batches: Vec<&[usize]> = order.chunks(cfg.batch_size_per_domain).collect();
        if let Some(cap) = cfg.steps_per_epoch {
            batches.truncate(cap);
        }

        let mut sum = LossBreakdown { main: 0.0, aux: 0.0, adv: 0.0, total: 0.0 };
        let (mut steps, mut skipped) = (0, 0);
        let mut last_err = None;
        for idx in &batches {
            let windows: Vec<&SequenceWindow> = idx.iter().map(|&i| &src_train[i]).collect();
            let batch = Batch::from_windows(&windows);
            let tgt = (arch.adversarial && lambda > 0.0).then(|| unlabelled(&targets.take(windows.len())));
            model.zero_grad();
            match joint_step(&mut model, &batch, tgt.as_ref(), &weights, cfg.alpha, lambda, &mut dropout_rng) {
                Ok(l) => {
                    optim.step(&mut model);
                    sum.main += l.main;
                    sum.aux += l.aux;
                    sum.adv += l.adv;
                    sum.total += l.total;
                    steps += 1;
                }
                Err(e @ Error::Divergence { .. }) => {
                    log::warn!("epoch {epoch}: skipped a step ({e})");
                    skipped += 1;
                    last_err = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        if steps == 0 {
            return Err(last_err.unwrap_or_else(|| Error::Config("no training batches".into())));
        }

        let val = evaluate_windows(&model, val_windows, cfg.eval_batch)?;
        let improved = best.as_ref().is_none_or(|(_, b, _)| val.macro_f1 > *b);
        if improved {
            best = Some((epoch, val.macro_f1, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        let n = steps as f64;
        let entry = EpochLog {
            epoch,
            lambda,
            loss_main: sum.main / n,
            loss_aux: sum.aux / n,
            loss_adv: sum.adv / n,
            loss_total: sum.total / n,
            steps,
            skipped_steps: skipped,
            val_domain: val_domain.clone(),
            val_accuracy: val.accuracy,
            val_mf1: val.macro_f1,
            val_kappa: val.kappa,
            improved,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch} lambda {lambda:.4} loss {:.4} (main {:.4} aux {:.4} adv {:.4}) val mf1 {:.4}",
            entry.loss_total,
            entry.loss_main,
            entry.loss_aux,
            entry.loss_adv,
            entry.val_mf1
        );
        log.push(entry);
        if since_best >= cfg.patience {
            break;
        }
    }
    let (best_epoch, best_val_mf1, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model, log, best_epoch, best_val_mf1, class_weights: weights })
}

/// Writes one JSON object per line.
pub fn write_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for entry in log {
        writeln!(f, "{}", serde_json::to_string(entry)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
