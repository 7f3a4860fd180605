//! Joint training: the adaptation-weight schedule, class weights, the
//! combined objective, the epoch loop with early stopping, and the ablation
//! and cross-dataset suites.

pub mod data;
pub mod run;
pub mod step;
pub mod suite;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{StageLabel, NUM_CLASSES};
use crate::model::{Architecture, ModelConfig};

pub use data::{DomainData, SplitWindows};
pub use run::{evaluate_windows, train_run, write_log, EpochLog, TrainOutcome};
pub use step::{joint_step, total_loss, unlabelled, Batch, LossBreakdown};
pub use suite::{ablation_suite, seed_runs, transfer_matrix};

/// `2 / (1 + exp(-10 p)) - 1` for training progress `p` in [0, 1].
pub fn lambda_schedule(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain { value: p, domain: "[0, 1]".into() });
    }
    Ok(2.0 / (1.0 + (-10.0 * p).exp()) - 1.0)
}

/// Inverse-frequency class weights rescaled to mean 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub [f64; NUM_CLASSES]);

impl ClassWeights {
    pub fn uniform() -> Self {
        ClassWeights([1.0; NUM_CLASSES])
    }

    pub fn as_f32(&self) -> [f32; NUM_CLASSES] {
        self.0.map(|w| w as f32)
    }
}

/// `w_c = N / (5 N_c)`, then divided by the mean of the five weights.
pub fn class_weights(counts: [u64; NUM_CLASSES]) -> Result<ClassWeights> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Config(format!(
            "class {} is absent from the source training epochs",
            StageLabel::from_index(c).unwrap()
        )));
    }
    let n: u64 = counts.iter().sum();
    let raw = counts.map(|c| n as f64 / (NUM_CLASSES as f64 * c as f64));
    let mean = raw.iter().sum::<f64>() / NUM_CLASSES as f64;
    Ok(ClassWeights(raw.map(|w| w / mean)))
}

/// The six component combinations of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Cnn,
    CnnAux,
    CnnDann,
    CnnAuxDann,
    CnnAuxBilstm,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::Cnn, Variant::CnnAux, Variant::CnnDann, Variant::CnnAuxDann, Variant::CnnAuxBilstm, Variant::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Cnn => "cnn",
            Variant::CnnAux => "cnn_aux",
            Variant::CnnDann => "cnn_dann",
            Variant::CnnAuxDann => "cnn_aux_dann",
            Variant::CnnAuxBilstm => "cnn_aux_bilstm",
            Variant::Full => "full",
        }
    }

    /// Row label as in the ablation table.
    pub fn components(self) -> &'static str {
        match self {
            Variant::Cnn => "CNN",
            Variant::CnnAux => "CNN + AUX",
            Variant::CnnDann => "CNN + DANN",
            Variant::CnnAuxDann => "CNN + AUX + DANN",
            Variant::CnnAuxBilstm => "CNN + AUX + BiLSTM",
            Variant::Full => "CNN + AUX + DANN + BiLSTM",
        }
    }

    pub fn architecture(self) -> Architecture {
        let (temporal, auxiliary, adversarial) = match self {
            Variant::Cnn => (false, false, false),
            Variant::CnnAux => (false, true, false),
            Variant::CnnDann => (false, false, true),
            Variant::CnnAuxDann => (false, true, true),
            Variant::CnnAuxBilstm => (true, true, false),
            Variant::Full => (true, true, true),
        };
        Architecture { temporal, auxiliary, adversarial }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| {
            Error::Usage(format!(
                "unknown variant {s:?}; expected one of cnn, cnn_aux, cnn_dann, cnn_aux_dann, cnn_aux_bilstm, full"
            ))
        })
    }
}

/// Which validation split drives model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStop {
    #[serde(alias = "target")]
    TargetValMf1,
    #[serde(alias = "source")]
    SourceValMf1,
}

impl FromStr for EarlyStop {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" | "target_val_mf1" => Ok(EarlyStop::TargetValMf1),
            "source" | "source_val_mf1" => Ok(EarlyStop::SourceValMf1),
            _ => Err(Error::Usage(format!("unknown early-stop mode {s:?}; expected target or source"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub total_epochs: usize,
    pub batch_size_per_domain: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub seeds: Vec<u64>,
    pub early_stop_metric: EarlyStop,
    pub variant: Variant,
    /// Holds the adaptation weight constant instead of following the schedule.
    pub lambda_override: Option<f64>,
    /// Caps optimization steps per epoch; `None` walks the whole source split.
    pub steps_per_epoch: Option<usize>,
    /// Windows per inference pass during validation.
    pub eval_batch: usize,
    /// Layer sizes; the architecture flags are taken from `variant`.
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.5,
            total_epochs: 50,
            batch_size_per_domain: 16,
            learning_rate: 1e-3,
            patience: 10,
            seeds: vec![42, 52, 62, 72, 82],
            early_stop_metric: EarlyStop::TargetValMf1,
            variant: Variant::Full,
            lambda_override: None,
            steps_per_epoch: None,
            eval_batch: 8,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha {} must be a nonnegative number", self.alpha)));
        }
        if self.total_epochs == 0 || self.batch_size_per_domain == 0 || self.eval_batch == 0 {
            return Err(Error::Config("epochs, batch size and eval batch must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::Config("steps per epoch must be positive".into()));
        }
        if let Some(l) = self.lambda_override {
            if !(0.0..1.0).contains(&l) {
                return Err(Error::Domain { value: l, domain: "[0, 1)".into() });
            }
        }
        self.model_config().validate()
    }

    /// Model layout with the variant's components.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig { architecture: self.variant.architecture(), ..self.model.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schedule_values() {
        assert_eq!(lambda_schedule(0.0).unwrap(), 0.0);
        assert!((lambda_schedule(0.5).unwrap() - 0.986_614_298_151_430_3).abs() < 1e-12);
        assert!((lambda_schedule(1.0).unwrap() - 0.999_909_204_262_595_1).abs() < 1e-12);
        assert!(matches!(lambda_schedule(1.01), Err(Error::Domain { .. })));
        assert!(lambda_schedule(-0.01).is_err());
        assert!(lambda_schedule(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn schedule_is_monotone_and_bounded(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (l1, l2) = (lambda_schedule(lo).unwrap(), lambda_schedule(hi).unwrap());
            prop_assert!(l1 <= l2);
            prop_assert!(l1 >= 0.0 && l2 <= 2.0 / (1.0 + (-10.0f64).exp()) - 1.0);
        }

        #[test]
        fn weights_are_scale_invariant(counts in prop::array::uniform5(1u64..10_000), k in 1u64..50) {
            let w = class_weights(counts).unwrap();
            let w2 = class_weights(counts.map(|c| c * k)).unwrap();
            for (a, b) in w.0.iter().zip(w2.0) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!((w.0.iter().sum::<f64>() / 5.0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_worked_example() {
        assert_eq!(class_weights([7; 5]).unwrap(), ClassWeights::uniform());
        let w = class_weights([40, 3, 40, 10, 7]).unwrap();
        let raw = [0.5, 100.0 / 15.0, 0.5, 2.0, 100.0 / 35.0];
        let mean = raw.iter().sum::<f64>() / 5.0;
        assert!((mean - 2.504_761_904_761_905).abs() < 1e-12);
        for (got, r) in w.0.iter().zip(raw) {
            assert!((got - r / mean).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_class_is_named() {
        match class_weights([5, 0, 5, 5, 5]) {
            Err(Error::Config(msg)) => assert!(msg.contains("N1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn variants_map_to_components() {
        assert_eq!(Variant::ALL.len(), 6);
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert_eq!(Variant::Full.architecture(), Architecture::FULL);
        let cnn = Variant::Cnn.architecture();
        assert!(!cnn.temporal && !cnn.auxiliary && !cnn.adversarial);
        assert!("bilstm".parse::<Variant>().is_err());
    }

    #[test]
    fn config_defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.alpha, c.patience, c.seeds.len()), (0.5, 10, 5));
        c.validate().unwrap();
        let json = serde_json::to_string(&c).unwrap();
        let back: TrainConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        let partial: TrainConfig = serde_json::from_str(r#"{"alpha": 0.25, "early_stop_metric": "source"}"#).unwrap();
        assert_eq!(partial.alpha, 0.25);
        assert_eq!(partial.early_stop_metric, EarlyStop::SourceValMf1);
    }
}
