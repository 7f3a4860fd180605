use rand::Rng as _;

use super::{Mode, Rng, Tensor};

/// Inverted dropout: surviving activations are scaled by `1 / (1 - rate)`.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub rate: f32,
}

impl Dropout {
    pub fn new(rate: f32) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Self { rate }
    }

    /// Returns the output and the applied mask (`None` when inactive).
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut Rng) -> (Tensor, Option<Vec<f32>>) {
        if mode == Mode::Eval || self.rate == 0.0 {
            return (x.clone(), None);
        }
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let mask: Vec<f32> = (0..x.len()).map(|_| if rng.random::<f32>() < keep { scale } else { 0.0 }).collect();
        let out = x.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        (Tensor::new(x.shape().to_vec(), out), Some(mask))
    }

    pub fn backward(mask: Option<&Vec<f32>>, grad_out: &Tensor) -> Tensor {
        match mask {
            None => grad_out.clone(),
            Some(m) => {
                Tensor::new(grad_out.shape().to_vec(), grad_out.data().iter().zip(m).map(|(g, s)| g * s).collect())
            }
        }
    }
}
