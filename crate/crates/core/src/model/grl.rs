//! Gradient reversal: identity on the way forward, `-lambda` scaling on the
//! way back.

use std::ops::Mul;

use crate::error::{Error, Result};

/// Scalars the reversal layer can act on.
pub trait Scalar: Copy + Mul<Output = Self> {
    fn from_f64(v: f64) -> Self;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReversal {
    lambda: f64,
}

impl GradientReversal {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Domain { value: lambda, domain: "lambda >= 0".into() });
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn forward<T: Scalar>(&self, z: &[T]) -> Vec<T> {
        z.to_vec()
    }

    pub fn backward<T: Scalar>(&self, grad: &[T]) -> Vec<T> {
        let factor = T::from_f64(-self.lambda);
        grad.iter().map(|&g| g * factor).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_is_exact_identity() {
        let grl = GradientReversal::new(0.7).unwrap();
        let z = [1.5f32, -0.0, f32::MIN_POSITIVE, 3.0e30];
        let y = grl.forward(&z);
        assert_eq!(
            y.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            z.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn zero_lambda_blocks_gradient() {
        let grl = GradientReversal::new(0.0).unwrap();
        assert!(grl.backward(&[1.0f64, -2.0, 5.0]).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn backward_scales_by_negative_lambda() {
        let grl = GradientReversal::new(0.25).unwrap();
        assert_eq!(grl.backward(&[4.0f64, -8.0]), vec![-1.0, 2.0]);
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(GradientReversal::new(-0.1).is_err());
        assert!(GradientReversal::new(f64::NAN).is_err());
    }
}
