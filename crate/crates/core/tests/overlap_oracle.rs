mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stda_core::evaluate::{overlap_average, WindowLogits};
use stda_core::ingest::NUM_CLASSES;
use stda_core::preprocess::{make_windows, SpectrogramEpoch, WINDOW_EPOCHS, WINDOW_STRIDE};

use common::{overlap_oracle, stage};

/// Epoch indices `0..n` with the listed indices removed, as dropped
/// unscoreable epochs would leave them.
fn recording(id: &str, n: usize, gaps: &[usize], rng: &mut ChaCha8Rng) -> Vec<Arc<SpectrogramEpoch>> {
    (0..n)
        .filter(|i| !gaps.contains(i))
        .map(|i| {
            Arc::new(SpectrogramEpoch {
                matrix: Vec::new(),
                label: stage(rng.random_range(0..NUM_CLASSES)),
                epoch_index: i,
                recording_id: id.to_string(),
            })
        })
        .collect()
}

fn random_logits(epochs: &[Arc<SpectrogramEpoch>], seed: u64) -> Vec<WindowLogits> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    make_windows(epochs, WINDOW_EPOCHS, WINDOW_STRIDE)
        .iter()
        .map(|w| {
            let logits = (0..w.len() * NUM_CLASSES).map(|_| rng.random_range(-4.0f32..4.0)).collect();
            WindowLogits::from_window(w, logits)
        })
        .collect()
}

fn check_against_oracle(windows: &[WindowLogits]) -> Result<(), TestCaseError> {
    let got = overlap_average(windows).unwrap();
    let want = overlap_oracle(windows);
    prop_assert_eq!(got.len(), want.len());
    for p in &got {
        let mean = &want[&(p.recording_id.clone(), p.epoch_index)];
        for (a, b) in p.averaged_logits.iter().zip(mean) {
            prop_assert!((*a as f64 - b).abs() <= 1e-6, "{} vs {}", a, b);
        }
        let best = (0..NUM_CLASSES).fold(0, |best, c| if mean[c] > mean[best] { c } else { best });
        prop_assert_eq!(p.predicted, stage(best));
    }
    Ok(())
}

proptest! {
    #[test]
    fn matches_enumeration_of_covering_windows(
        lengths in prop::collection::vec(0usize..80, 1..4),
        gap_seed in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(gap_seed);
        let mut epochs = Vec::new();
        for (r, &n) in lengths.iter().enumerate() {
            let gaps: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.03)).collect();
            epochs.extend(recording(&format!("rec{r}"), n, &gaps, &mut rng));
        }
        check_against_oracle(&random_logits(&epochs, seed))?;
    }
}

#[test]
fn hundred_random_recordings() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for r in 0..100 {
        let n = rng.random_range(10..120);
        let epochs = recording(&format!("r{r}"), n, &[], &mut rng);
        check_against_oracle(&random_logits(&epochs, r)).unwrap();
    }
}

#[test]
fn interior_epochs_are_covered_twice() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100;
    let epochs = recording("r", n, &[], &mut rng);
    let windows = make_windows(&epochs, WINDOW_EPOCHS, WINDOW_STRIDE);
    let cover = |e: usize| windows.iter().filter(|w| w.epoch_indices().any(|i| i == e)).count();
    for e in 0..WINDOW_STRIDE {
        assert_eq!(cover(e), 1, "epoch {e}");
    }
    for e in WINDOW_STRIDE..n - WINDOW_STRIDE {
        assert_eq!(cover(e), 2, "epoch {e}");
    }
    for e in n - WINDOW_STRIDE..n {
        assert_eq!(cover(e), 1, "epoch {e}");
    }
}
