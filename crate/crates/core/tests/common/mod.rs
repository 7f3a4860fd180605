//! Independent reference implementations and fixtures shared by the
//! integration tests and the acceptance harness.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stda_core::evaluate::WindowLogits;
use stda_core::ingest::{Manifest, ManifestEntry, Split, StageLabel, NUM_CLASSES};
use stda_core::model::{EncoderConfig, ModelConfig};
use stda_core::preprocess::{
    preprocess_recording, PipelineParams, PreprocessedRecording, SpectrogramEpoch, FREQ_BINS, TIME_FRAMES,
};
use stda_core::synthdata::{generate_domain, manifest_for, SynthSpec};
use stda_core::train::{DomainData, TrainConfig, Variant};

/// `2 / (1 + e^(-10p)) - 1` evaluated through the identity
/// `2 / (1 + e^(-x)) - 1 = tanh(x / 2)`.
pub fn lambda_oracle(p: f64) -> f64 {
    (5.0 * p).tanh()
}

/// Scalars recomputed from raw label pairs with explicit loops.
#[derive(Debug, Clone)]
pub struct OracleMetrics {
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    pub accuracy: f64,
    pub macro_f1: f64,
    pub kappa: f64,
    pub per_class_f1: [f64; NUM_CLASSES],
}

pub fn metrics_oracle(pairs: &[(usize, usize)]) -> OracleMetrics {
    let n = pairs.len() as f64;
    let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for &(t, p) in pairs {
        confusion[t][p] += 1;
    }
    let agree = pairs.iter().filter(|(t, p)| t == p).count() as f64;
    let mut per_class_f1 = [0.0; NUM_CLASSES];
    let mut p_e = 0.0;
    for (c, f1) in per_class_f1.iter_mut().enumerate() {
        let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count() as f64;
        let predicted = pairs.iter().filter(|&&(_, p)| p == c).count() as f64;
        let actual = pairs.iter().filter(|&&(t, _)| t == c).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        *f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        p_e += (predicted / n) * (actual / n);
    }
    let p_o = agree / n;
    let kappa = if p_e >= 1.0 { 1.0 } else { (p_o - p_e) / (1.0 - p_e) };
    OracleMetrics {
        confusion,
        accuracy: p_o,
        macro_f1: per_class_f1.iter().sum::<f64>() / NUM_CLASSES as f64,
        kappa,
        per_class_f1,
    }
}

/// For every physical epoch, the mean of its logits over every window that
/// lists it, found by scanning all windows.
pub fn overlap_oracle(windows: &[WindowLogits]) -> BTreeMap<(String, usize), Vec<f64>> {
    let mut keys = std::collections::BTreeSet::new();
    for w in windows {
        for i in 0..w.labels.len() {
            keys.insert((w.recording_id.clone(), w.start_epoch_index + i));
        }
    }
    keys.into_iter()
        .map(|(rec, e)| {
            let mut sum = vec![0.0f64; NUM_CLASSES];
            let mut count = 0;
            for w in windows.iter().filter(|w| w.recording_id == rec) {
                if e >= w.start_epoch_index && e < w.start_epoch_index + w.labels.len() {
                    let pos = e - w.start_epoch_index;
                    for (s, v) in sum.iter_mut().zip(&w.logits[pos * NUM_CLASSES..(pos + 1) * NUM_CLASSES]) {
                        *s += *v as f64;
                    }
                    count += 1;
                }
            }
            let mean = sum.into_iter().map(|s| s / count as f64).collect();
            ((rec, e), mean)
        })
        .collect()
}

pub fn stage(i: usize) -> StageLabel {
    StageLabel::from_index(i).unwrap()
}

/// Random spectrogram epochs whose mean level depends on the label, so a
/// model can learn something in a few steps.
pub fn random_recording(subject: &str, id: &str, n_epochs: usize, rng: &mut ChaCha8Rng) -> PreprocessedRecording {
    let epochs = (0..n_epochs)
        .map(|i| {
            let label = rng.random_range(0..NUM_CLASSES);
            let matrix =
                (0..FREQ_BINS * TIME_FRAMES).map(|_| 0.15 * label as f32 + rng.random::<f32>() * 0.4).collect();
            SpectrogramEpoch { matrix, label: stage(label), epoch_index: i, recording_id: id.to_string() }
        })
        .collect();
    PreprocessedRecording {
        subject_id: subject.to_string(),
        recording_id: id.to_string(),
        source_sampling_rate_hz: 100.0,
        epochs,
    }
}

/// A small dataset with one recording per subject and subjects split
/// 3 train / 1 val / 1 test.
pub fn random_domain(name: &str, epochs_per_recording: usize, seed: u64) -> DomainData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits = [Split::Train, Split::Train, Split::Train, Split::Val, Split::Test];
    let mut recordings = Vec::new();
    let mut entries = Vec::new();
    let mut split_assignment = BTreeMap::new();
    for (i, split) in splits.iter().enumerate() {
        let subject = format!("{name}-s{i}");
        let id = format!("{subject}-r0");
        recordings.push(random_recording(&subject, &id, epochs_per_recording, &mut rng));
        entries.push(ManifestEntry { recording_id: id.clone(), subject_id: subject.clone(), path: id, include: true });
        split_assignment.insert(subject, *split);
    }
    let manifest = Manifest { dataset_name: name.to_string(), recordings: entries, split_assignment };
    DomainData::from_recordings(manifest, recordings).unwrap()
}

/// Narrow model and short schedule for contract tests.
pub fn tiny_config(variant: Variant) -> TrainConfig {
    TrainConfig {
        variant,
        total_epochs: 2,
        batch_size_per_domain: 2,
        steps_per_epoch: Some(2),
        seeds: vec![42],
        eval_batch: 4,
        model: ModelConfig {
            encoder: EncoderConfig { feature_dim: 16, ..EncoderConfig::with_widths([2, 4, 4, 4]) },
            lstm_hidden: 8,
            lstm_layers: 1,
            aux_hidden: 8,
            disc_hidden: [8, 4],
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

/// Synthetic domain run through the full preprocessing chain.
pub fn synthetic_domain(spec: &SynthSpec, name: &str) -> stda_core::Result<DomainData> {
    let recordings = generate_domain(spec, name)?;
    let manifest = manifest_for(spec, name, &recordings)?;
    let params = PipelineParams::default();
    let processed =
        recordings.iter().map(|r| preprocess_recording(r, &params)).collect::<stda_core::Result<Vec<_>>>()?;
    DomainData::from_recordings(manifest, processed)
}

/// Reduced widths and a short schedule so the variant comparisons fit on one
/// CPU core; the structure of every variant is unchanged.
pub fn desk_config() -> TrainConfig {
    TrainConfig {
        total_epochs: 15,
        batch_size_per_domain: 8,
        steps_per_epoch: Some(30),
        patience: 15,
        model: ModelConfig {
            encoder: EncoderConfig { feature_dim: 32, ..EncoderConfig::with_widths([4, 8, 8, 8]) },
            lstm_hidden: 32,
            lstm_layers: 1,
            aux_hidden: 32,
            disc_hidden: [32, 16],
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}
