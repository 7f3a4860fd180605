//! Minimal dense layers with hand-written backward passes.
//!
//! Every layer exposes `forward` returning its output together with whatever
//! it needs to cache, and `backward` consuming that cache, accumulating
//! parameter gradients in place and returning the input gradient. Data is
//! row-major `f32`; batched images use NCHW order.

pub mod activation;
pub mod conv;
pub mod dropout;
pub mod init;
pub mod linear;
pub mod loss;
pub mod lstm;
pub mod norm;
pub mod optim;

use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Whether a forward pass is part of optimization (batch statistics, active
/// dropout) or inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match data length {}",
            data.len()
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape;
        self
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows `[start, end)` along the leading axis.
    pub fn slice_rows(&self, start: usize, end: usize) -> Tensor {
        let row: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Tensor::new(shape, self.data[start * row..end * row].to_vec())
    }

    /// Concatenation along the leading axis.
    pub fn concat_rows(parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty());
        let tail = parts[0].shape[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            assert_eq!(p.shape[1..], tail[..], "trailing shapes differ");
            rows += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        Tensor::new(shape, data)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f32) {
        for v in &mut self.data {
            *v *= factor;
        }
    }
}

/// A named tensor of learnable values with an accumulated gradient.
///
/// Non-trainable entries (batch-norm running statistics) ride along so they
/// are checkpointed, but the optimizer skips them.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f32>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![0.0; value.len()];
        Self { name: name.into(), shape, value, grad, trainable: true }
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, fill: f32) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![fill; n])
    }

    pub fn buffer(name: impl Into<String>, shape: Vec<usize>, fill: f32) -> Self {
        let mut p = Self::filled(name, shape, fill);
        p.trainable = false;
        p.grad = Vec::new();
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Anything owning parameters.
pub trait Module {
    fn visit(&self, f: &mut dyn FnMut(&Param));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    /// Number of trainable scalars.
    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| {
            if p.trainable {
                n += p.len()
            }
        });
        n
    }
}

/// `C = op(A) * op(B) + beta * C` for row-major operands, where `op(A)` is
/// `m x k` and `op(B)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    trans_a: bool,
    b: &[f32],
    trans_b: bool,
    c: &mut [f32],
    beta: f32,
) {
    debug_assert!(a.len() >= m * k);
    debug_assert!(b.len() >= k * n);
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the debug assertions above bound every index the kernel touches
    // and the three slices never alias (`c` is borrowed mutably).
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::{Rng as _, SeedableRng};

    pub fn rng(seed: u64) -> Rng {
        Rng::seed_from_u64(seed)
    }

    pub fn random_tensor(shape: Vec<usize>, rng: &mut Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Weighted sum `sum_i w_i y_i` in f64 as a scalar probe.
    pub fn probe(y: &[f32], w: &[f32]) -> f64 {
        y.iter().zip(w).map(|(a, b)| *a as f64 * *b as f64).sum()
    }

    /// Checks an analytic gradient against central differences of `f`.
    pub fn assert_grad_close(analytic: &[f32], x: &[f32], mut f: impl FnMut(&[f32]) -> f64, step: f32, tol: f64) {
        let mut xs = x.to_vec();
        for i in 0..x.len() {
            let orig = xs[i];
            xs[i] = orig + step;
            let up = f(&xs);
            xs[i] = orig - step;
            let down = f(&xs);
            xs[i] = orig;
            let numeric = (up - down) / (2.0 * step as f64);
            let err = (numeric - analytic[i] as f64).abs();
            let scale = numeric.abs().max(analytic[i].abs() as f64).max(1.0);
            assert!(err <= tol * scale, "grad mismatch at {i}: analytic {} numeric {numeric}", analytic[i]);
        }
    }
}
