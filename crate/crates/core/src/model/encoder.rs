//! Convolutional epoch encoder: spectrogram `1 x F x T` to a feature vector.
//!
//! Four blocks of conv3x3 -> batch norm -> GELU, the second and third with
//! stride 2, each followed by an identity-skip residual unit
//! (conv -> BN -> GELU -> conv -> BN, added to the block output, then GELU).
//! Global average pooling, dropout and a linear projection finish the stack.

use rand::SeedableRng;

use super::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::nn::activation::{gelu_backward, gelu_forward};
use crate::nn::conv::Conv2d;
use crate::nn::dropout::Dropout;
use crate::nn::linear::Linear;
use crate::nn::norm::{BatchNorm2d, BatchNormCache};
use crate::nn::{Mode, Module, Param, Rng, Tensor};

const STRIDES: [usize; 4] = [1, 2, 2, 1];

#[derive(Debug, Clone)]
struct ConvBnGelu {
    conv: Conv2d,
    bn: BatchNorm2d,
}

struct ConvBnGeluCache {
    input: Tensor,
    bn: BatchNormCache,
    pre_act: Tensor,
}

impl ConvBnGelu {
    fn new(name: &str, cin: usize, cout: usize, stride: usize, rng: &mut Rng) -> Self {
        Self {
            conv: Conv2d::new(&format!("{name}.conv"), cin, cout, 3, stride, rng),
            bn: BatchNorm2d::new(&format!("{name}.bn"), cout),
        }
    }

    fn forward(&self, x: Tensor, mode: Mode) -> (Tensor, ConvBnGeluCache) {
        let y = self.conv.forward(&x);
        let (pre_act, bn) = self.bn.forward(&y, mode);
        let out = gelu_forward(&pre_act);
        (out, ConvBnGeluCache { input: x, bn, pre_act })
    }

    fn backward(&mut self, cache: &ConvBnGeluCache, grad: &Tensor) -> Tensor {
        let g = gelu_backward(&cache.pre_act, grad);
        let g = self.bn.backward(&cache.bn, &g);
        self.conv.backward(&cache.input, &g)
    }

    fn absorb(&mut self, cache: &ConvBnGeluCache) {
        self.bn.absorb(&cache.bn);
    }
}

impl Module for ConvBnGelu {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.conv.visit(f);
        self.bn.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_mut(f);
        self.bn.visit_mut(f);
    }
}

#[derive(Debug, Clone)]
struct Residual {
    first: ConvBnGelu,
    conv: Conv2d,
    bn: BatchNorm2d,
}

struct ResidualCache {
    first: ConvBnGeluCache,
    mid: Tensor,
    bn: BatchNormCache,
    sum: Tensor,
}

impl Residual {
    fn new(name: &str, channels: usize, rng: &mut Rng) -> Self {
        Self {
            first: ConvBnGelu::new(&format!("{name}.a"), channels, channels, 1, rng),
            conv: Conv2d::new(&format!("{name}.b.conv"), channels, channels, 3, 1, rng),
            bn: BatchNorm2d::new(&format!("{name}.b.bn"), channels),
        }
    }

    fn forward(&self, x: Tensor, mode: Mode) -> (Tensor, ResidualCache) {
        let skip = x.clone();
        let (mid, first) = self.first.forward(x, mode);
        let y = self.conv.forward(&mid);
        let (mut sum, bn) = self.bn.forward(&y, mode);
        sum.add_assign(&skip);
        let out = gelu_forward(&sum);
        (out, ResidualCache { first, mid, bn, sum })
    }

    fn backward(&mut self, cache: &ResidualCache, grad: &Tensor) -> Tensor {
        let g_sum = gelu_backward(&cache.sum, grad);
        let g = self.bn.backward(&cache.bn, &g_sum);
        let g = self.conv.backward(&cache.mid, &g);
        let mut dx = self.first.backward(&cache.first, &g);
        dx.add_assign(&g_sum);
        dx
    }

    fn absorb(&mut self, cache: &ResidualCache) {
        self.first.absorb(&cache.first);
        self.bn.absorb(&cache.bn);
    }
}

impl Module for Residual {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.first.visit(f);
        self.conv.visit(f);
        self.bn.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.first.visit_mut(f);
        self.conv.visit_mut(f);
        self.bn.visit_mut(f);
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    blocks: Vec<(ConvBnGelu, Residual)>,
    dropout: Dropout,
    projection: Linear,
}

/// Intermediate activations of one training-mode forward pass.
pub struct EncoderCache {
    blocks: Vec<(ConvBnGeluCache, ResidualCache)>,
    pooled_shape: [usize; 4],
    mask: Option<Vec<f32>>,
    dropped: Tensor,
}

impl Encoder {
    pub fn new(config: &EncoderConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(4);
        let mut cin = config.in_shape.0;
        for (i, (&width, &stride)) in config.channel_widths.iter().zip(&STRIDES).enumerate() {
            let name = format!("encoder.block{i}");
            blocks.push((
                ConvBnGelu::new(&name, cin, width, stride, rng),
                Residual::new(&format!("{name}.residual"), width, rng),
            ));
            cin = width;
        }
        Ok(Self {
            config: config.clone(),
            blocks,
            dropout: Dropout::new(config.dropout),
            projection: Linear::new("encoder.projection", cin, config.feature_dim, rng),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (c, f, t) = self.config.in_shape;
        if x.shape().len() != 4 || x.shape()[1..] != [c, f, t] || x.dim(0) == 0 {
            return Err(Error::shape(format!("[n>=1, {c}, {f}, {t}]"), format!("{:?}", x.shape())));
        }
        if !x.all_finite() {
            return Err(Error::Input("spectrogram batch contains non-finite values".into()));
        }
        Ok(())
    }

    /// Returns `[n, feature_dim]` features and the cache for `backward`.
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<(Tensor, EncoderCache)> {
        self.check_input(x)?;
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (block, residual) in &self.blocks {
            let (y, bc) = block.forward(cur, mode);
            let (y, rc) = residual.forward(y, mode);
            caches.push((bc, rc));
            cur = y;
        }
        let (n, c, h, w) = (cur.dim(0), cur.dim(1), cur.dim(2), cur.dim(3));
        let plane = (h * w) as f32;
        let pooled: Vec<f32> = cur.data().chunks(h * w).map(|p| p.iter().sum::<f32>() / plane).collect();
        let pooled = Tensor::new(vec![n, c], pooled);
        let (dropped, mask) = self.dropout.forward(&pooled, mode, rng);
        let z = self.projection.forward(&dropped);
        Ok((z, EncoderCache { blocks: caches, pooled_shape: [n, c, h, w], mask, dropped }))
    }

    /// Inference-mode features.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let mut unused = Rng::seed_from_u64(0);
        Ok(self.forward(x, Mode::Eval, &mut unused)?.0)
    }

    /// Accumulates parameter gradients for the loss whose gradient w.r.t. the
    /// features is `grad`.
    pub fn backward(&mut self, cache: &EncoderCache, grad: &Tensor) {
        let g = self.projection.backward(&cache.dropped, grad);
        let g = Dropout::backward(cache.mask.as_ref(), &g);
        let [n, c, h, w] = cache.pooled_shape;
        let plane = (h * w) as f32;
        let mut spread = Vec::with_capacity(n * c * h * w);
        for &v in g.data() {
            spread.extend(std::iter::repeat(v / plane).take(h * w));
        }
        let mut g = Tensor::new(vec![n, c, h, w], spread);
        for ((block, residual), (bc, rc)) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            g = residual.backward(rc, &g);
            g = block.backward(bc, &g);
        }
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// batch-norm estimates.
    pub fn absorb(&mut self, cache: &EncoderCache) {
        for ((block, residual), (bc, rc)) in self.blocks.iter_mut().zip(&cache.blocks) {
            block.absorb(bc);
            residual.absorb(rc);
        }
    }
}

impl Module for Encoder {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        for (b, r) in &self.blocks {
            b.visit(f);
            r.visit(f);
        }
        self.projection.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for (b, r) in &mut self.blocks {
            b.visit_mut(f);
            r.visit_mut(f);
        }
        self.projection.visit_mut(f);
    }
}
