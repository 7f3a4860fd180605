use super::{gemm, init, Module, Param, Rng, Tensor};

/// `y = x W^T + b` over the last axis of `x`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    in_features: usize,
    out_features: usize,
}

impl Linear {
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut Rng) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                vec![out_features, in_features],
                init::fan_in_uniform(in_features * out_features, in_features, rng),
            ),
            bias: Param::filled(format!("{name}.bias"), vec![out_features], 0.0),
            in_features,
            out_features,
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    fn rows(&self, x: &Tensor) -> usize {
        assert_eq!(*x.shape().last().expect("non-scalar input"), self.in_features, "linear input width");
        x.len() / self.in_features
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let rows = self.rows(x);
        let mut out = Vec::with_capacity(rows * self.out_features);
        for _ in 0..rows {
            out.extend_from_slice(&self.bias.value);
        }
        gemm(rows, self.in_features, self.out_features, x.data(), false, &self.weight.value, true, &mut out, 1.0);
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = self.out_features;
        Tensor::new(shape, out)
    }

    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Tensor {
        let rows = self.rows(x);
        assert_eq!(grad_out.len(), rows * self.out_features);
        let dy = grad_out.data();
        gemm(self.out_features, rows, self.in_features, dy, true, x.data(), false, &mut self.weight.grad, 1.0);
        for row in dy.chunks(self.out_features) {
            for (g, d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; rows * self.in_features];
        gemm(rows, self.out_features, self.in_features, dy, false, &self.weight.value, false, &mut dx, 0.0);
        Tensor::new(x.shape().to_vec(), dx)
    }
}

impl Module for Linear {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
