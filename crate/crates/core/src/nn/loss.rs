//! Scalar objectives with their gradients w.r.t. the logits.

use super::activation::{sigmoid, softmax_rows};

/// Class-weighted cross-entropy over rows of `logits` (`n x k`), normalized
/// by the total weight of the targets present: `sum_i w[y_i] * -log p_i[y_i]
/// / sum_i w[y_i]`.
///
/// Returns the loss and its gradient w.r.t. the logits.
pub fn weighted_cross_entropy(logits: &[f32], k: usize, targets: &[usize], weights: &[f32]) -> (f64, Vec<f32>) {
    assert_eq!(logits.len(), targets.len() * k);
    assert_eq!(weights.len(), k);
    let probs = softmax_rows(logits, k);
    let total_w: f64 = targets.iter().map(|&t| weights[t] as f64).sum();
    if total_w == 0.0 {
        return (0.0, vec![0.0; logits.len()]);
    }
    let mut loss = 0.0f64;
    let mut grad = vec![0.0f32; logits.len()];
    for (i, &t) in targets.iter().enumerate() {
        let row = &logits[i * k..(i + 1) * k];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let lse = max + row.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln();
        let w = weights[t] as f64;
        loss += w * (lse - row[t] as f64);
        let scale = (w / total_w) as f32;
        for j in 0..k {
            let onehot = if j == t { 1.0 } else { 0.0 };
            grad[i * k + j] = scale * (probs[i * k + j] - onehot);
        }
    }
    (loss / total_w, grad)
}

/// Mean binary cross-entropy on logits against targets in `{0, 1}`.
pub fn bce_with_logits(logits: &[f32], targets: &[f32]) -> (f64, Vec<f32>) {
    assert_eq!(logits.len(), targets.len());
    let n = logits.len() as f64;
    let mut loss = 0.0f64;
    let mut grad = Vec::with_capacity(logits.len());
    for (&x, &y) in logits.iter().zip(targets) {
        let xd = x as f64;
        // log(1 + exp(x)) - y * x, computed stably
        let softplus = xd.max(0.0) + (-xd.abs()).exp().ln_1p();
        loss += softplus - y as f64 * xd;
        grad.push(((sigmoid(x) - y) as f64 / n) as f32);
    }
    (loss / n, grad)
}
