//! Pointwise activations.

use super::Tensor;

const SQRT_2_OVER_PI: f32 = 0.797_884_6;
const GELU_CUBIC: f32 = 0.044_715;

/// GELU with the tanh approximation, evaluated through the identity
/// `(1 + tanh u) / 2 = sigmoid(2u)` so each element costs one `exp`.
pub fn gelu(x: f32) -> f32 {
    x * gate(x)
}

fn gate(x: f32) -> f32 {
    let inner = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    1.0 / (1.0 + (-2.0 * inner).exp())
}

pub fn gelu_grad(x: f32) -> f32 {
    let s = gate(x);
    let dinner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    s + 2.0 * x * s * (1.0 - s) * dinner
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn gelu_forward(x: &Tensor) -> Tensor {
    Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| gelu(v)).collect())
}

/// `x` is the pre-activation input.
pub fn gelu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    Tensor::new(x.shape().to_vec(), x.data().iter().zip(grad_out.data()).map(|(&v, &g)| g * gelu_grad(v)).collect())
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| v.max(0.0)).collect())
}

pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    Tensor::new(
        x.shape().to_vec(),
        x.data().iter().zip(grad_out.data()).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect(),
    )
}

/// Row-wise softmax of an `n x k` matrix.
pub fn softmax_rows(logits: &[f32], k: usize) -> Vec<f32> {
    let mut out = vec![0.0; logits.len()];
    for (row, dst) in logits.chunks(k).zip(out.chunks_mut(k)) {
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f64;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            sum += *d as f64;
        }
        for d in dst.iter_mut() {
            *d = (*d as f64 / sum) as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_difference_quotient() {
        for i in -40..=40 {
            let x = i as f32 * 0.1;
            let h = 1e-3f64;
            let f = |v: f64| gelu(v as f32) as f64;
            let num = (f(x as f64 + h) - f(x as f64 - h)) / (2.0 * h);
            assert!((num - gelu_grad(x) as f64).abs() < 2e-3, "x={x}");
        }
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_192).abs() < 1e-5);
        assert!((gelu(-1.0) + 0.158_808).abs() < 1e-5);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax_rows(&[1.0, 2.0, 3.0, 1000.0, 0.0, -1000.0], 3);
        assert!((p[..3].iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!((p[3] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-200.0) >= 0.0 && sigmoid(-200.0) < 1e-30);
        assert!((sigmoid(200.0) - 1.0).abs() < 1e-7);
    }
}
