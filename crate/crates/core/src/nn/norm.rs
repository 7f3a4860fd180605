//! Batch normalization over the channel axis of NCHW tensors.

use super::{Mode, Module, Param, Tensor};

const EPS: f32 = 1e-5;
const MOMENTUM: f32 = 0.1;

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    channels: usize,
}

/// Saved state for the training-mode backward pass.
pub struct BatchNormCache {
    normalized: Vec<f32>,
    inv_std: Vec<f32>,
    shape: Vec<usize>,
    /// Batch mean and unbiased variance, present in training mode.
    batch_stats: Option<(Vec<f32>, Vec<f32>)>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.weight"), vec![channels], 1.0),
            beta: Param::filled(format!("{name}.bias"), vec![channels], 0.0),
            running_mean: Param::buffer(format!("{name}.running_mean"), vec![channels], 0.0),
            running_var: Param::buffer(format!("{name}.running_var"), vec![channels], 1.0),
            channels,
        }
    }

    /// In `Train` mode normalizes with batch statistics (fold them into the
    /// running estimates with [`BatchNorm2d::absorb`]); in `Eval` mode uses the
    /// running estimates. Eval-mode caches are not meant for `backward`.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> (Tensor, BatchNormCache) {
        let (n, c) = (x.dim(0), x.dim(1));
        assert_eq!(c, self.channels);
        let plane: usize = x.shape()[2..].iter().product();
        let count = (n * plane) as f64;
        let mut mean = vec![0.0f32; c];
        let mut var = vec![0.0f32; c];
        let mut batch_stats = None;
        match mode {
            Mode::Train => {
                let mut unbiased_var = vec![0.0f32; c];
                for ch in 0..c {
                    let mut s = 0.0f64;
                    for b in 0..n {
                        let off = (b * c + ch) * plane;
                        s += x.data()[off..off + plane].iter().map(|&v| v as f64).sum::<f64>();
                    }
                    let m = s / count;
                    let mut ss = 0.0f64;
                    for b in 0..n {
                        let off = (b * c + ch) * plane;
                        ss += x.data()[off..off + plane].iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>();
                    }
                    mean[ch] = m as f32;
                    var[ch] = (ss / count) as f32;
                    unbiased_var[ch] = if count > 1.0 { (ss / (count - 1.0)) as f32 } else { 0.0 };
                }
                batch_stats = Some((mean.clone(), unbiased_var));
            }
            Mode::Eval => {
                mean.copy_from_slice(&self.running_mean.value);
                var.copy_from_slice(&self.running_var.value);
            }
        }
        let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + EPS).sqrt()).collect();
        let mut normalized = vec![0.0f32; x.len()];
        let mut out = vec![0.0f32; x.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * plane;
                let (g, bt, m, is) = (self.gamma.value[ch], self.beta.value[ch], mean[ch], inv_std[ch]);
                for i in off..off + plane {
                    let xh = (x.data()[i] - m) * is;
                    normalized[i] = xh;
                    out[i] = g * xh + bt;
                }
            }
        }
        (
            Tensor::new(x.shape().to_vec(), out),
            BatchNormCache { normalized, inv_std, shape: x.shape().to_vec(), batch_stats },
        )
    }

    /// Folds a training-mode batch's statistics into the running estimates.
    pub fn absorb(&mut self, cache: &BatchNormCache) {
        if let Some((mean, var)) = &cache.batch_stats {
            for ch in 0..self.channels {
                let rm = &mut self.running_mean.value[ch];
                *rm = (1.0 - MOMENTUM) * *rm + MOMENTUM * mean[ch];
                let rv = &mut self.running_var.value[ch];
                *rv = (1.0 - MOMENTUM) * *rv + MOMENTUM * var[ch];
            }
        }
    }

    pub fn backward(&mut self, cache: &BatchNormCache, grad_out: &Tensor) -> Tensor {
        assert_eq!(grad_out.shape(), &cache.shape[..]);
        let (n, c) = (cache.shape[0], cache.shape[1]);
        let plane: usize = cache.shape[2..].iter().product();
        let count = (n * plane) as f32;
        let dy = grad_out.data();
        let mut dx = vec![0.0f32; dy.len()];
        for ch in 0..c {
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xh = 0.0f64;
            for b in 0..n {
                let off = (b * c + ch) * plane;
                for i in off..off + plane {
                    sum_dy += dy[i] as f64;
                    sum_dy_xh += (dy[i] * cache.normalized[i]) as f64;
                }
            }
            self.gamma.grad[ch] += sum_dy_xh as f32;
            self.beta.grad[ch] += sum_dy as f32;
            let scale = self.gamma.value[ch] * cache.inv_std[ch] / count;
            let (sdy, sdyx) = (sum_dy as f32, sum_dy_xh as f32);
            for b in 0..n {
                let off = (b * c + ch) * plane;
                for i in off..off + plane {
                    dx[i] = scale * (count * dy[i] - sdy - cache.normalized[i] * sdyx);
                }
            }
        }
        Tensor::new(cache.shape.clone(), dx)
    }
}

impl Module for BatchNorm2d {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.gamma);
        f(&self.beta);
        f(&self.running_mean);
        f(&self.running_var);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::*;

    #[test]
    fn train_mode_normalizes_each_channel() {
        let mut r = rng(2);
        let mut bn = BatchNorm2d::new("bn", 3);
        let mut x = random_tensor(vec![4, 3, 5, 5], &mut r);
        x.data_mut().iter_mut().for_each(|v| *v = *v * 3.0 + 2.0);
        let (y, cache) = bn.forward(&x, Mode::Train);
        bn.absorb(&cache);
        for ch in 0..3 {
            let vals: Vec<f32> =
                (0..4).flat_map(|b| y.data()[(b * 3 + ch) * 25..(b * 3 + ch + 1) * 25].to_vec()).collect();
            let m = vals.iter().sum::<f32>() / vals.len() as f32;
            let v = vals.iter().map(|a| (a - m).powi(2)).sum::<f32>() / vals.len() as f32;
            assert!(m.abs() < 1e-5);
            assert!((v - 1.0).abs() < 1e-3);
        }
        assert!(bn.running_mean.value.iter().all(|m| *m > 0.1));
    }

    #[test]
    fn eval_mode_uses_running_statistics() {
        let mut bn = BatchNorm2d::new("bn", 1);
        bn.running_mean.value[0] = 1.0;
        bn.running_var.value[0] = 4.0 - EPS;
        let x = Tensor::new(vec![1, 1, 1, 2], vec![1.0, 5.0]);
        let (y, _) = bn.forward(&x, Mode::Eval);
        assert!((y.data()[0]).abs() < 1e-6);
        assert!((y.data()[1] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng(5);
        let mut bn = BatchNorm2d::new("bn", 2);
        bn.gamma.value = vec![1.3, 0.7];
        bn.beta.value = vec![0.1, -0.2];
        let x = random_tensor(vec![3, 2, 2, 2], &mut r);
        let w = random_tensor(x.shape().to_vec(), &mut r);
        let (_, cache) = bn.forward(&x, Mode::Train);
        let dx = bn.backward(&cache, &w);
        let proto = bn.clone();
        assert_grad_close(
            dx.data(),
            x.data(),
            |xs| {
                let b = proto.clone();
                let (y, _) = b.forward(&Tensor::new(x.shape().to_vec(), xs.to_vec()), Mode::Train);
                probe(y.data(), w.data())
            },
            1e-2,
            2e-3,
        );
        let g = bn.gamma.grad.clone();
        assert_grad_close(
            &g,
            &proto.gamma.value,
            |gs| {
                let mut b = proto.clone();
                b.gamma.value = gs.to_vec();
                let (y, _) = b.forward(&x, Mode::Train);
                probe(y.data(), w.data())
            },
            1e-2,
            1e-3,
        );
    }
}
