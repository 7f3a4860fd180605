//! Batched inference over sequence windows.

use crate::error::Result;
use crate::model::{InferenceModel, ModelState};
use crate::nn::Tensor;
use crate::preprocess::{SequenceWindow, FREQ_BINS, TIME_FRAMES};

use super::{overlap_average, EpochPrediction, WindowLogits};

/// Stacks the members of `windows` into `[windows * L, 1, F, T]`.
pub fn stack_windows(windows: &[&SequenceWindow]) -> Tensor {
    let cell = FREQ_BINS * TIME_FRAMES;
    let rows: usize = windows.iter().map(|w| w.len()).sum();
    let mut data = Vec::with_capacity(rows * cell);
    for w in windows {
        for e in &w.epochs {
            data.extend_from_slice(&e.matrix);
        }
    }
    Tensor::new(vec![rows, 1, FREQ_BINS, TIME_FRAMES], data)
}

/// Anything that maps stacked windows to `[windows, L, classes]` logits.
pub trait WindowClassifier {
    fn window_logits(&self, x: &Tensor, windows: usize) -> Result<Tensor>;
}

impl WindowClassifier for ModelState {
    fn window_logits(&self, x: &Tensor, windows: usize) -> Result<Tensor> {
        ModelState::window_logits(self, x, windows)
    }
}

impl WindowClassifier for InferenceModel {
    fn window_logits(&self, x: &Tensor, windows: usize) -> Result<Tensor> {
        InferenceModel::window_logits(self, x, windows)
    }
}

/// Raw per-window logits, `batch` windows per forward pass.
pub fn window_outputs(
    model: &impl WindowClassifier,
    windows: &[SequenceWindow],
    batch: usize,
) -> Result<Vec<WindowLogits>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(batch.max(1)) {
        let refs: Vec<&SequenceWindow> = chunk.iter().collect();
        let logits = model.window_logits(&stack_windows(&refs), chunk.len())?;
        let per = logits.len() / chunk.len();
        for (w, l) in chunk.iter().zip(logits.data().chunks(per)) {
            out.push(WindowLogits::from_window(w, l.to_vec()));
        }
    }
    Ok(out)
}

/// One overlap-averaged prediction per physical epoch covered by `windows`.
pub fn predict(
    model: &impl WindowClassifier,
    windows: &[SequenceWindow],
    batch: usize,
) -> Result<Vec<EpochPrediction>> {
    overlap_average(&window_outputs(model, windows, batch)?)
}
