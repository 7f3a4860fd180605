mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stda_core::model::{GradientReversal, ModelState};
use stda_core::nn::loss::bce_with_logits;
use stda_core::nn::optim::Adam;
use stda_core::nn::{Mode, Module, Rng, Tensor};
use stda_core::preprocess::{SequenceWindow, SpectrogramEpoch};
use stda_core::train::{
    class_weights, joint_step, total_loss, train_run, unlabelled, Batch, ClassWeights, DomainData, EarlyStop, EpochLog,
    TrainConfig, Variant,
};

use common::{random_domain, tiny_config};

fn params(model: &impl Module) -> Vec<Vec<f32>> {
    let mut out = Vec::new();
    model.visit(&mut |p| out.push(p.value.clone()));
    out
}

/// Same spectrograms, labels permuted across all epochs of the set.
fn permute_labels(windows: &[SequenceWindow], seed: u64) -> Vec<SequenceWindow> {
    let mut labels: Vec<_> = windows.iter().flat_map(|w| w.labels()).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut next = labels.into_iter();
    windows
        .iter()
        .map(|w| SequenceWindow {
            epochs: w
                .epochs
                .iter()
                .map(|e| Arc::new(SpectrogramEpoch { label: next.next().unwrap(), ..(**e).clone() }))
                .collect(),
            ..w.clone()
        })
        .collect()
}

fn without_timing(log: &[EpochLog]) -> Vec<EpochLog> {
    log.iter().map(|e| EpochLog { wall_time_s: 0.0, ..e.clone() }).collect()
}

#[test]
fn one_step_ignores_target_labels() {
    let source = random_domain("S", 30, 1);
    let target = random_domain("T", 30, 2);
    let shuffled = permute_labels(&target.windows.train, 9);
    assert_ne!(
        shuffled.iter().flat_map(|w| w.labels()).collect::<Vec<_>>(),
        target.windows.train.iter().flat_map(|w| w.labels()).collect::<Vec<_>>()
    );
    let cfg = tiny_config(Variant::Full);
    let weights = class_weights(source.train_label_counts()).unwrap();
    let src: Vec<&SequenceWindow> = source.windows.train.iter().take(2).collect();
    let batch = Batch::from_windows(&src);

    let step = |tgt: &[SequenceWindow]| {
        let mut model = ModelState::new(&cfg.model_config(), 42).unwrap();
        let mut adam = Adam::new(1e-3);
        let refs: Vec<&SequenceWindow> = tgt.iter().take(2).collect();
        let x = unlabelled(&refs);
        let mut rng = Rng::seed_from_u64(5);
        model.zero_grad();
        let losses = joint_step(&mut model, &batch, Some(&x), &weights, 0.5, 0.7, &mut rng).unwrap();
        adam.step(&mut model);
        (losses, params(&model))
    };
    let (la, pa) = step(&target.windows.train);
    let (lb, pb) = step(&shuffled);
    assert_eq!(la, lb);
    assert_eq!(pa, pb);
}

#[test]
fn training_run_ignores_target_labels_under_source_selection() {
    let source = random_domain("S", 30, 1);
    let target = random_domain("T", 30, 2);
    let mut relabelled = target.clone();
    relabelled.windows.train = permute_labels(&target.windows.train, 4);
    relabelled.windows.val = permute_labels(&target.windows.val, 5);
    relabelled.windows.test = permute_labels(&target.windows.test, 6);
    let cfg = TrainConfig { early_stop_metric: EarlyStop::SourceValMf1, ..tiny_config(Variant::Full) };
    let a = train_run(&source, &target, &cfg, 42).unwrap();
    let b = train_run(&source, &relabelled, &cfg, 42).unwrap();
    assert_eq!(without_timing(&a.log), without_timing(&b.log));
    assert_eq!(params(&a.model), params(&b.model));
}

#[test]
fn seeded_runs_are_identical() {
    let source = random_domain("S", 30, 1);
    let target = random_domain("T", 30, 2);
    let cfg = tiny_config(Variant::Full);
    let a = train_run(&source, &target, &cfg, 42).unwrap();
    let b = train_run(&source, &target, &cfg, 42).unwrap();
    assert_eq!(without_timing(&a.log), without_timing(&b.log));
    assert_eq!(params(&a.model), params(&b.model));
    let c = train_run(&source, &target, &cfg, 43).unwrap();
    assert_ne!(params(&a.model), params(&c.model));
}

#[test]
fn full_variant_without_adaptation_matches_source_only_variant() {
    let source = random_domain("S", 30, 1);
    let target = random_domain("T", 30, 2);
    let full = TrainConfig { lambda_override: Some(0.0), ..tiny_config(Variant::Full) };
    let plain = tiny_config(Variant::CnnAuxBilstm);
    let a = train_run(&source, &target, &full, 42).unwrap();
    let b = train_run(&source, &target, &plain, 42).unwrap();
    for (x, y) in a.log.iter().zip(&b.log) {
        assert_eq!((x.loss_main, x.loss_aux, x.loss_total), (y.loss_main, y.loss_aux, y.loss_total));
        assert_eq!(x.loss_adv, 0.0);
        assert_eq!(x.val_mf1, y.val_mf1);
    }
}

#[test]
fn source_only_variant_trains_without_target_windows() {
    let source = random_domain("S", 30, 1);
    let mut target = random_domain("T", 30, 2);
    target.windows.train.clear();
    train_run(&source, &target, &tiny_config(Variant::Cnn), 42).unwrap();
    assert!(train_run(&source, &target, &tiny_config(Variant::CnnDann), 42).is_err());
}

fn domain_labels(ns: usize, nt: usize) -> Vec<f32> {
    (0..ns + nt).map(|i| if i < ns { 0.0 } else { 1.0 }).collect()
}

fn domain_accuracy(logits: &[f32], labels: &[f32]) -> f64 {
    let hits = logits.iter().zip(labels).filter(|(l, y)| (**l > 0.0) == (**y > 0.5)).count();
    hits as f64 / labels.len() as f64
}

fn shifted_batch(domain: &DomainData, shift: f32) -> Tensor {
    let refs: Vec<&SequenceWindow> = domain.windows.train.iter().take(2).collect();
    let mut x = unlabelled(&refs);
    x.data_mut().iter_mut().for_each(|v| *v = *v * (1.0 + shift) + shift);
    x
}

#[test]
fn adversarial_updates_move_in_opposite_directions() {
    let cfg = tiny_config(Variant::Full);
    let mut model = ModelState::new(&cfg.model_config(), 8).unwrap();
    let src = shifted_batch(&random_domain("S", 30, 1), 0.0);
    let tgt = shifted_batch(&random_domain("T", 30, 2), 1.0);
    let labels = domain_labels(src.dim(0), tgt.dim(0));
    let x = Tensor::concat_rows(&[&src, &tgt]);
    let mut rng = Rng::seed_from_u64(0);
    let lr = 0.1;
    // Losses are accumulated in f64 from f32 logits.
    let rounding = 1e-6;

    // Discriminator descent on frozen encoder features.
    // Batch statistics, as during training; the running estimates of a fresh
    // model are uninformative.
    let (z, _) = model.encoder.forward(&x, Mode::Train, &mut Rng::seed_from_u64(1)).unwrap();
    let disc = model.discriminator.as_mut().unwrap();
    let mut previous = f64::INFINITY;
    let mut first = None;
    for _ in 0..40 {
        let (logits, cache) = disc.forward(&z, Mode::Eval, &mut rng);
        let (loss, grad) = bce_with_logits(logits.data(), &labels);
        assert!(loss <= previous + rounding, "discriminator loss rose from {previous} to {loss}");
        previous = loss;
        first.get_or_insert(loss);
        disc.zero_grad();
        disc.backward(&cache, &Tensor::new(logits.shape().to_vec(), grad));
        disc.visit_mut(&mut |p| p.value.iter_mut().zip(&p.grad).for_each(|(v, g)| *v -= lr * g));
    }

    assert!(previous < first.unwrap() - 1e-4, "discriminator did not learn: {first:?} -> {previous}");

    // Encoder descent through the reversal layer on a frozen discriminator.
    let grl = GradientReversal::new(1.0).unwrap();
    let probe = |model: &ModelState| {
        let (z, cache) = model.encoder.forward(&x, Mode::Train, &mut Rng::seed_from_u64(1)).unwrap();
        let reversed = Tensor::new(z.shape().to_vec(), grl.forward(z.data()));
        let (logits, dcache) =
            model.discriminator.as_ref().unwrap().forward(&reversed, Mode::Eval, &mut Rng::seed_from_u64(2));
        (logits, cache, dcache)
    };
    let (logits, cache, dcache) = probe(&model);
    let (loss_before, grad) = bce_with_logits(logits.data(), &labels);
    let acc_before = domain_accuracy(logits.data(), &labels);
    let before = params(model.discriminator.as_ref().unwrap());
    let g_z = model.discriminator.as_mut().unwrap().backward(&dcache, &Tensor::new(logits.shape().to_vec(), grad));
    let g_enc = Tensor::new(g_z.shape().to_vec(), grl.backward(g_z.data()));
    model.encoder.zero_grad();
    model.encoder.backward(&cache, &g_enc);
    model.encoder.visit_mut(&mut |p| p.value.iter_mut().zip(&p.grad).for_each(|(v, g)| *v -= 0.01 * g));
    let (logits, _, _) = probe(&model);
    let (loss_after, _) = bce_with_logits(logits.data(), &labels);
    let acc_after = domain_accuracy(logits.data(), &labels);
    assert_eq!(params(model.discriminator.as_ref().unwrap()), before);
    assert!(loss_after > loss_before, "adversarial loss {loss_before} -> {loss_after}");
    assert!(acc_after <= acc_before, "discriminator accuracy {acc_before} -> {acc_after}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reported_total_is_the_weighted_sum(alpha in 0.0f64..2.0, lambda in 0.0f64..0.999, seed in 0u64..1000) {
        let source = random_domain("S", 12, seed);
        let target = random_domain("T", 12, seed + 1);
        let cfg = tiny_config(Variant::Full);
        let model = ModelState::new(&cfg.model_config(), seed).unwrap();
        let src: Vec<&SequenceWindow> = source.windows.train.iter().take(1).collect();
        let tgt: Vec<&SequenceWindow> = target.windows.train.iter().take(1).collect();
        let weights = ClassWeights([1.0, 2.0, 0.5, 1.5, 1.0]);
        let l = total_loss(&model, &Batch::from_windows(&src), Some(&unlabelled(&tgt)), &weights, alpha, lambda, &mut Rng::seed_from_u64(seed)).unwrap();
        prop_assert!((l.total - (l.main + alpha * l.aux + lambda * l.adv)).abs() <= 1e-7);
        prop_assert!(l.adv > 0.0 || lambda == 0.0);
    }
}
