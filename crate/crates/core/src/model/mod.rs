//! The sleep-staging network: CNN epoch encoder, auxiliary per-epoch head,
//! sequence classifier, gradient reversal and domain discriminator.

pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod grl;
pub mod heads;

use rand::SeedableRng;

pub use config::{Architecture, EncoderConfig, ModelConfig};
pub use encoder::{Encoder, EncoderCache};
pub use grl::GradientReversal;
pub use heads::{AuxHead, Discriminator, TemporalClassifier};

use crate::error::{Error, Result};
use crate::nn::activation::softmax_rows;
use crate::nn::linear::Linear;
use crate::nn::{Module, Param, Rng, Tensor};

/// The classifier whose output is the model's prediction.
#[derive(Debug, Clone)]
pub enum MainHead {
    /// BiLSTM over the window, one prediction per step.
    Temporal(TemporalClassifier),
    /// Independent linear classification of each epoch's features.
    PerEpoch(Linear),
}

pub enum MainCache {
    Temporal(heads::TemporalCache),
    PerEpoch(Tensor),
}

impl MainHead {
    /// `z` holds `windows * steps` feature rows in window-major order; returns
    /// logits with one row per input row.
    pub fn forward(&self, z: &Tensor, windows: usize) -> (Tensor, MainCache) {
        let (rows, width) = (z.dim(0), z.dim(1));
        match self {
            MainHead::Temporal(head) => {
                let steps = rows / windows;
                let seq = z.clone().reshape(vec![windows, steps, width]);
                let (logits, _, cache) = head.forward(&seq);
                let k = logits.dim(2);
                (logits.reshape(vec![rows, k]), MainCache::Temporal(cache))
            }
            MainHead::PerEpoch(linear) => (linear.forward(z), MainCache::PerEpoch(z.clone())),
        }
    }

    pub fn backward(&mut self, cache: &MainCache, grad: &Tensor, windows: usize) -> Tensor {
        match (self, cache) {
            (MainHead::Temporal(head), MainCache::Temporal(c)) => {
                let (rows, k) = (grad.dim(0), grad.dim(1));
                let g = grad.clone().reshape(vec![windows, rows / windows, k]);
                let dz = head.backward(c, &g);
                let width = dz.dim(2);
                dz.reshape(vec![rows, width])
            }
            (MainHead::PerEpoch(linear), MainCache::PerEpoch(z)) => linear.backward(z, grad),
            _ => panic!("main-head cache does not match head kind"),
        }
    }
}

impl Module for MainHead {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        match self {
            MainHead::Temporal(h) => h.visit(f),
            MainHead::PerEpoch(l) => l.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        match self {
            MainHead::Temporal(h) => h.visit_mut(f),
            MainHead::PerEpoch(l) => l.visit_mut(f),
        }
    }
}

fn check_windows(x: &Tensor, windows: usize) -> Result<()> {
    if windows == 0 || x.dim(0) % windows != 0 {
        return Err(Error::shape(format!("a multiple of {windows} spectrograms"), format!("{}", x.dim(0))));
    }
    Ok(())
}

fn window_logits(encoder: &Encoder, main: &MainHead, x: &Tensor, windows: usize) -> Result<Tensor> {
    check_windows(x, windows)?;
    let z = encoder.encode(x)?;
    let (logits, _) = main.forward(&z, windows);
    let (rows, k) = (logits.dim(0), logits.dim(1));
    Ok(logits.reshape(vec![windows, rows / windows, k]))
}

/// Full parameter set of a trained or training model plus the current
/// adaptation weight.
#[derive(Debug, Clone)]
pub struct ModelState {
    config: ModelConfig,
    pub encoder: Encoder,
    pub main: MainHead,
    pub aux: Option<AuxHead>,
    pub discriminator: Option<Discriminator>,
    lambda: f64,
}

impl ModelState {
    /// Freshly initialized parameters, deterministic in `seed`.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::seed_from_u64(seed);
        let encoder = Encoder::new(&config.encoder, &mut rng)?;
        let features = config.encoder.feature_dim;
        let arch = config.architecture;
        let main = if arch.temporal {
            MainHead::Temporal(TemporalClassifier::new(
                features,
                config.lstm_hidden,
                config.lstm_layers,
                config.num_classes,
                &mut rng,
            ))
        } else {
            MainHead::PerEpoch(Linear::new("epoch_head", features, config.num_classes, &mut rng))
        };
        let aux = arch
            .auxiliary
            .then(|| AuxHead::new(features, config.aux_hidden, config.num_classes, config.aux_dropout, &mut rng));
        let discriminator =
            arch.adversarial.then(|| Discriminator::new(features, config.disc_hidden, config.disc_dropout, &mut rng));
        Ok(Self { config: config.clone(), encoder, main, aux, discriminator, lambda: 0.0 })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::Domain { value: lambda, domain: "[0, 1)".into() });
        }
        self.lambda = lambda;
        Ok(())
    }

    /// Inference-mode encoder features `[n, feature_dim]`.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.encoder.encode(x)
    }

    /// Auxiliary-head class probabilities for feature rows `z`.
    pub fn aux_classify(&self, z: &Tensor) -> Result<Tensor> {
        let head = self.aux.as_ref().ok_or_else(|| Error::Config("model has no auxiliary head".into()))?;
        check_features(z, self.config.encoder.feature_dim)?;
        Ok(head.classify(z))
    }

    /// Per-step class probabilities `[batch, L, classes]` and BiLSTM hidden
    /// states `[batch, L, 2H]` for feature sequences `[batch, L, features]`.
    pub fn temporal_classify(&self, z: &Tensor) -> Result<(Tensor, Tensor)> {
        let MainHead::Temporal(head) = &self.main else {
            return Err(Error::Config("model has no sequence classifier".into()));
        };
        if z.shape().len() != 3 || z.dim(2) != self.config.encoder.feature_dim {
            return Err(Error::shape(
                format!("[batch, steps, {}]", self.config.encoder.feature_dim),
                format!("{:?}", z.shape()),
            ));
        }
        let (logits, hidden, _) = head.forward(z);
        let k = logits.dim(2);
        let probs = Tensor::new(logits.shape().to_vec(), softmax_rows(logits.data(), k));
        Ok((probs, hidden))
    }

    /// Target-domain probability per feature row.
    pub fn discriminate(&self, z: &Tensor) -> Result<Vec<f32>> {
        let d = self.discriminator.as_ref().ok_or_else(|| Error::Config("model has no domain discriminator".into()))?;
        check_features(z, self.config.encoder.feature_dim)?;
        Ok(d.discriminate(z))
    }

    /// Main-classifier logits `[windows, L, classes]` for `windows * L`
    /// spectrograms laid out window-major.
    pub fn window_logits(&self, x: &Tensor, windows: usize) -> Result<Tensor> {
        window_logits(&self.encoder, &self.main, x, windows)
    }

    /// Drops the training-only heads, keeping encoder and main classifier.
    pub fn prune(&self) -> InferenceModel {
        InferenceModel { encoder: self.encoder.clone(), main: self.main.clone() }
    }
}

fn check_features(z: &Tensor, width: usize) -> Result<()> {
    if z.shape().len() != 2 || z.dim(1) != width {
        return Err(Error::shape(format!("[n, {width}]"), format!("{:?}", z.shape())));
    }
    Ok(())
}

impl Module for ModelState {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.encoder.visit(f);
        self.main.visit(f);
        if let Some(a) = &self.aux {
            a.visit(f);
        }
        if let Some(d) = &self.discriminator {
            d.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.encoder.visit_mut(f);
        self.main.visit_mut(f);
        if let Some(a) = &mut self.aux {
            a.visit_mut(f);
        }
        if let Some(d) = &mut self.discriminator {
            d.visit_mut(f);
        }
    }
}

/// The deployable part of a model: encoder and main classifier only.
#[derive(Debug, Clone)]
pub struct InferenceModel {
    pub encoder: Encoder,
    pub main: MainHead,
}

impl InferenceModel {
    pub fn window_logits(&self, x: &Tensor, windows: usize) -> Result<Tensor> {
        window_logits(&self.encoder, &self.main, x, windows)
    }
}

impl Module for InferenceModel {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.encoder.visit(f);
        self.main.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.encoder.visit_mut(f);
        self.main.visit_mut(f);
    }
}
