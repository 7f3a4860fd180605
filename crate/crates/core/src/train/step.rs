//! The combined objective `main + alpha * aux + lambda * adv` and one
//! gradient computation over a paired source/target batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::stack_windows;
use crate::model::heads::{AuxCache, DiscriminatorCache};
use crate::model::{EncoderCache, GradientReversal, MainCache, ModelState};
use crate::nn::loss::{bce_with_logits, weighted_cross_entropy};
use crate::nn::{Mode, Rng, Tensor};
use crate::preprocess::SequenceWindow;

use super::ClassWeights;

/// Labelled source windows stacked window-major.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Tensor,
    pub targets: Vec<usize>,
    pub windows: usize,
}

impl Batch {
    pub fn from_windows(windows: &[&SequenceWindow]) -> Self {
        Batch {
            x: stack_windows(windows),
            targets: windows.iter().flat_map(|w| w.targets()).collect(),
            windows: windows.len(),
        }
    }
}

/// Stacks target windows without touching their labels.
pub fn unlabelled(windows: &[&SequenceWindow]) -> Tensor {
    stack_windows(windows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub main: f64,
    pub aux: f64,
    pub adv: f64,
    pub total: f64,
}

struct Pass {
    encoder: EncoderCache,
    main: MainCache,
    main_grad: Tensor,
    aux: Option<(AuxCache, Tensor)>,
    adv: Option<(DiscriminatorCache, Tensor)>,
    source_rows: usize,
}

fn finite(term: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence { term: term.to_string() })
    }
}

/// Training-mode forward pass. The adversarial branch runs only when the
/// model has a discriminator and `lambda > 0`; with `lambda = 0` it would
/// contribute neither loss nor gradient.
fn forward(
    model: &ModelState,
    source: &Batch,
    target: Option<&Tensor>,
    weights: &ClassWeights,
    alpha: f64,
    lambda: f64,
    rng: &mut Rng,
) -> Result<(LossBreakdown, Pass)> {
    let adversarial = model.discriminator.is_some() && lambda > 0.0;
    let target = match (adversarial, target) {
        (true, Some(t)) => Some(t),
        (true, None) => return Err(Error::Config("adversarial training needs a target batch".into())),
        (false, _) => None,
    };
    let x = match target {
        Some(t) => Tensor::concat_rows(&[&source.x, t]),
        None => source.x.clone(),
    };
    let n_src = source.x.dim(0);
    let (z_all, enc_cache) = model.encoder.forward(&x, Mode::Train, rng)?;
    let z_src = if target.is_some() { z_all.slice_rows(0, n_src) } else { z_all.clone() };
    let w = weights.as_f32();
    let k = model.config().num_classes;

    let (logits, main_cache) = model.main.forward(&z_src, source.windows);
    let (l_main, g_main) = weighted_cross_entropy(logits.data(), k, &source.targets, &w);
    let l_main = finite("main", l_main)?;

    let (l_aux, aux) = match &model.aux {
        Some(head) => {
            let (logits, cache) = head.forward(&z_src, Mode::Train, rng);
            let (l, g) = weighted_cross_entropy(logits.data(), k, &source.targets, &w);
            (finite("aux", l)?, Some((cache, Tensor::new(logits.shape().to_vec(), g))))
        }
        None => (0.0, None),
    };

    let (l_adv, adv) = match (&model.discriminator, target) {
        (Some(d), Some(t)) => {
            let grl = GradientReversal::new(lambda)?;
            let reversed = Tensor::new(z_all.shape().to_vec(), grl.forward(z_all.data()));
            let (logits, cache) = d.forward(&reversed, Mode::Train, rng);
            let domains: Vec<f32> = (0..n_src + t.dim(0)).map(|i| if i < n_src { 0.0 } else { 1.0 }).collect();
            let (l, g) = bce_with_logits(logits.data(), &domains);
            (finite("adv", l)?, Some((cache, Tensor::new(logits.shape().to_vec(), g))))
        }
        _ => (0.0, None),
    };

    let total = finite("total", l_main + alpha * l_aux + lambda * l_adv)?;
    let pass = Pass {
        encoder: enc_cache,
        main: main_cache,
        main_grad: Tensor::new(logits.shape().to_vec(), g_main),
        aux,
        adv,
        source_rows: n_src,
    };
    Ok((LossBreakdown { main: l_main, aux: l_aux, adv: l_adv, total }, pass))
}

/// Loss terms for one batch without touching gradients.
pub fn total_loss(
    model: &ModelState,
    source: &Batch,
    target: Option<&Tensor>,
    weights: &ClassWeights,
    alpha: f64,
    lambda: f64,
    rng: &mut Rng,
) -> Result<LossBreakdown> {
    Ok(forward(model, source, target, weights, alpha, lambda, rng)?.0)
}

/// Forward and backward pass: accumulates parameter gradients of the total
/// loss and folds batch-norm statistics into the running estimates. The
/// encoder sees the discriminator gradient through the reversal layer.
pub fn joint_step(
    model: &mut ModelState,
    source: &Batch,
    target: Option<&Tensor>,
    weights: &ClassWeights,
    alpha: f64,
    lambda: f64,
    rng: &mut Rng,
) -> Result<LossBreakdown> {
    let (losses, pass) = forward(model, source, target, weights, alpha, lambda, rng)?;
    let windows = source.windows;
    let mut g_src = model.main.backward(&pass.main, &pass.main_grad, windows);
    if let (Some(head), Some((cache, grad))) = (model.aux.as_mut(), pass.aux.as_ref()) {
        let mut g = grad.clone();
        g.scale(alpha as f32);
        g_src.add_assign(&head.backward(cache, &g));
    }
    let g_all = match (model.discriminator.as_mut(), pass.adv.as_ref()) {
        (Some(d), Some((cache, grad))) => {
            let mut g = grad.clone();
            g.scale(lambda as f32);
            let g_rev = d.backward(cache, &g);
            let grl = GradientReversal::new(lambda)?;
            let mut g_all = Tensor::new(g_rev.shape().to_vec(), grl.backward(g_rev.data()));
            let width = g_src.dim(1);
            let padded = Tensor::concat_rows(&[&g_src, &Tensor::zeros(vec![g_all.dim(0) - pass.source_rows, width])]);
            g_all.add_assign(&padded);
            g_all
        }
        _ => g_src,
    };
    model.encoder.backward(&pass.encoder, &g_all);
    model.encoder.absorb(&pass.encoder);
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EncoderConfig, ModelConfig};
    use crate::nn::testutil::{random_tensor, rng};
    use crate::nn::Module;
    use crate::train::Variant;

    fn model(variant: Variant) -> ModelState {
        let cfg = ModelConfig {
            encoder: EncoderConfig::with_widths([2, 2, 2, 2]),
            architecture: variant.architecture(),
            lstm_hidden: 8,
            lstm_layers: 1,
            aux_hidden: 8,
            disc_hidden: [8, 4],
            ..ModelConfig::default()
        };
        ModelState::new(&cfg, 5).unwrap()
    }

    fn batch(seed: u64) -> Batch {
        let mut r = rng(seed);
        Batch { x: random_tensor(vec![10, 1, 76, 60], &mut r), targets: (0..10).map(|i| i % 5).collect(), windows: 1 }
    }

    #[test]
    fn degenerate_weights_leave_main_only() {
        let m = model(Variant::Full);
        let t = random_tensor(vec![10, 1, 76, 60], &mut rng(9));
        let l = total_loss(&m, &batch(1), Some(&t), &ClassWeights::uniform(), 0.0, 0.0, &mut rng(3)).unwrap();
        assert_eq!(l.total, l.main);
    }

    #[test]
    fn breakdown_recombines() {
        let m = model(Variant::Full);
        let t = random_tensor(vec![10, 1, 76, 60], &mut rng(9));
        let l = total_loss(&m, &batch(1), Some(&t), &ClassWeights::uniform(), 0.5, 0.7, &mut rng(3)).unwrap();
        assert!((l.total - (l.main + 0.5 * l.aux + 0.7 * l.adv)).abs() < 1e-7);
        assert!(l.adv > 0.0 && l.aux > 0.0);
    }

    #[test]
    fn adversarial_variant_needs_target() {
        let m = model(Variant::CnnDann);
        assert!(matches!(
            total_loss(&m, &batch(1), None, &ClassWeights::uniform(), 0.5, 0.5, &mut rng(3)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn step_produces_finite_gradients_everywhere() {
        let mut m = model(Variant::Full);
        let t = random_tensor(vec![10, 1, 76, 60], &mut rng(9));
        joint_step(&mut m, &batch(1), Some(&t), &ClassWeights::uniform(), 0.5, 0.5, &mut rng(3)).unwrap();
        let mut nonzero = 0;
        m.visit(&mut |p| {
            if p.trainable {
                assert!(p.grad.iter().all(|g| g.is_finite()), "{}", p.name);
                if p.grad.iter().any(|g| *g != 0.0) {
                    nonzero += 1;
                }
            }
        });
        assert!(nonzero > 10);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let m = model(Variant::Cnn);
        let mut b = batch(1);
        b.x.data_mut()[0] = f32::NAN;
        assert!(total_loss(&m, &b, None, &ClassWeights::uniform(), 0.5, 0.0, &mut rng(3)).is_err());
    }
}
