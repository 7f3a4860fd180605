//! Classification and domain heads on top of encoder features.

use rand::SeedableRng;

use crate::nn::activation::{gelu_backward, gelu_forward, relu_backward, relu_forward, sigmoid, softmax_rows};
use crate::nn::dropout::Dropout;
use crate::nn::linear::Linear;
use crate::nn::lstm::{BiLstm, BiLstmCache};
use crate::nn::{Mode, Module, Param, Rng, Tensor};

/// Per-epoch auxiliary classifier: linear -> GELU -> dropout -> linear.
#[derive(Debug, Clone)]
pub struct AuxHead {
    pub hidden: Linear,
    pub out: Linear,
    dropout: Dropout,
}

pub struct AuxCache {
    z: Tensor,
    pre_act: Tensor,
    mask: Option<Vec<f32>>,
    dropped: Tensor,
}

impl AuxHead {
    pub fn new(features: usize, hidden: usize, classes: usize, dropout: f32, rng: &mut Rng) -> Self {
        Self {
            hidden: Linear::new("aux.hidden", features, hidden, rng),
            out: Linear::new("aux.out", hidden, classes, rng),
            dropout: Dropout::new(dropout),
        }
    }

    /// Logits `[n, classes]`.
    pub fn forward(&self, z: &Tensor, mode: Mode, rng: &mut Rng) -> (Tensor, AuxCache) {
        let pre_act = self.hidden.forward(z);
        let act = gelu_forward(&pre_act);
        let (dropped, mask) = self.dropout.forward(&act, mode, rng);
        let logits = self.out.forward(&dropped);
        (logits, AuxCache { z: z.clone(), pre_act, mask, dropped })
    }

    pub fn backward(&mut self, cache: &AuxCache, grad: &Tensor) -> Tensor {
        let g = self.out.backward(&cache.dropped, grad);
        let g = Dropout::backward(cache.mask.as_ref(), &g);
        let g = gelu_backward(&cache.pre_act, &g);
        self.hidden.backward(&cache.z, &g)
    }

    /// Class probabilities in inference mode.
    pub fn classify(&self, z: &Tensor) -> Tensor {
        let (logits, _) = self.forward(z, Mode::Eval, &mut Rng::seed_from_u64(0));
        let k = self.out.out_features();
        Tensor::new(logits.shape().to_vec(), softmax_rows(logits.data(), k))
    }
}

impl Module for AuxHead {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.hidden.visit(f);
        self.out.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.hidden.visit_mut(f);
        self.out.visit_mut(f);
    }
}

/// Domain discriminator MLP with two ReLU hidden layers and a single logit.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub layers: [Linear; 3],
    dropout: Dropout,
}

pub struct DiscriminatorCache {
    inputs: [Tensor; 3],
    pre_acts: [Tensor; 2],
    masks: [Option<Vec<f32>>; 2],
}

impl Discriminator {
    pub fn new(features: usize, hidden: [usize; 2], dropout: f32, rng: &mut Rng) -> Self {
        Self {
            layers: [
                Linear::new("disc.l0", features, hidden[0], rng),
                Linear::new("disc.l1", hidden[0], hidden[1], rng),
                Linear::new("disc.l2", hidden[1], 1, rng),
            ],
            dropout: Dropout::new(dropout),
        }
    }

    /// Domain logits `[n, 1]`; `sigmoid` gives the target-domain probability.
    pub fn forward(&self, z: &Tensor, mode: Mode, rng: &mut Rng) -> (Tensor, DiscriminatorCache) {
        let p0 = self.layers[0].forward(z);
        let (h0, m0) = self.dropout.forward(&relu_forward(&p0), mode, rng);
        let p1 = self.layers[1].forward(&h0);
        let (h1, m1) = self.dropout.forward(&relu_forward(&p1), mode, rng);
        let logits = self.layers[2].forward(&h1);
        (logits, DiscriminatorCache { inputs: [z.clone(), h0, h1], pre_acts: [p0, p1], masks: [m0, m1] })
    }

    pub fn backward(&mut self, cache: &DiscriminatorCache, grad: &Tensor) -> Tensor {
        let g = self.layers[2].backward(&cache.inputs[2], grad);
        let g = Dropout::backward(cache.masks[1].as_ref(), &g);
        let g = relu_backward(&cache.pre_acts[1], &g);
        let g = self.layers[1].backward(&cache.inputs[1], &g);
        let g = Dropout::backward(cache.masks[0].as_ref(), &g);
        let g = relu_backward(&cache.pre_acts[0], &g);
        self.layers[0].backward(&cache.inputs[0], &g)
    }

    /// Domain probabilities in inference mode, one per row of `z`.
    pub fn discriminate(&self, z: &Tensor) -> Vec<f32> {
        let (logits, _) = self.forward(z, Mode::Eval, &mut Rng::seed_from_u64(0));
        logits.data().iter().map(|&l| sigmoid(l)).collect()
    }
}

impl Module for Discriminator {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.layers.iter().for_each(|l| l.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }
}

/// Two-layer BiLSTM followed by a per-step linear classifier.
#[derive(Debug, Clone)]
pub struct TemporalClassifier {
    pub lstm: BiLstm,
    pub classifier: Linear,
}

pub struct TemporalCache {
    lstm: BiLstmCache,
    hidden: Tensor,
}

impl TemporalClassifier {
    pub fn new(features: usize, hidden: usize, layers: usize, classes: usize, rng: &mut Rng) -> Self {
        let lstm = BiLstm::new("temporal.lstm", features, hidden, layers, rng);
        let classifier = Linear::new("temporal.classifier", lstm.output_width(), classes, rng);
        Self { lstm, classifier }
    }

    /// `z` is `[batch, steps, features]`; returns per-step logits
    /// `[batch, steps, classes]` and hidden states `[batch, steps, 2H]`.
    pub fn forward(&self, z: &Tensor) -> (Tensor, Tensor, TemporalCache) {
        let (hidden, lstm) = self.lstm.forward(z);
        let logits = self.classifier.forward(&hidden);
        (logits, hidden.clone(), TemporalCache { lstm, hidden })
    }

    pub fn backward(&mut self, cache: &TemporalCache, grad: &Tensor) -> Tensor {
        let g = self.classifier.backward(&cache.hidden, grad);
        self.lstm.backward(&cache.lstm, &g)
    }
}

impl Module for TemporalClassifier {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.lstm.visit(f);
        self.classifier.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.lstm.visit_mut(f);
        self.classifier.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::*;

    #[test]
    fn zeroed_aux_head_is_uniform() {
        let mut head = AuxHead::new(8, 6, 5, 0.3, &mut rng(0));
        head.visit_mut(&mut |p| p.value.iter_mut().for_each(|v| *v = 0.0));
        let probs = head.classify(&random_tensor(vec![4, 8], &mut rng(1)));
        assert_eq!(probs.shape(), &[4, 5]);
        assert!(probs.data().iter().all(|p| (p - 0.2).abs() < 1e-7));
    }

    #[test]
    fn discriminator_zero_output_layer_gives_half() {
        let mut d = Discriminator::new(8, [6, 4], 0.3, &mut rng(0));
        d.layers[2].weight.value.fill(0.0);
        d.layers[2].bias.value.fill(0.0);
        let p = d.discriminate(&random_tensor(vec![5, 8], &mut rng(2)));
        assert!(p.iter().all(|v| *v == 0.5));
    }

    #[test]
    fn discriminator_outputs_in_open_unit_interval() {
        let d = Discriminator::new(8, [6, 4], 0.3, &mut rng(3));
        let mut z = random_tensor(vec![50, 8], &mut rng(4));
        z.scale(5.0);
        assert!(d.discriminate(&z).iter().all(|p| *p > 0.0 && *p < 1.0));
    }

    #[test]
    fn discriminator_input_gradient_matches_differences() {
        let mut r = rng(6);
        let mut d = Discriminator::new(4, [5, 3], 0.0, &mut r);
        let z = random_tensor(vec![3, 4], &mut r);
        let w = random_tensor(vec![3, 1], &mut r);
        let (_, cache) = d.forward(&z, Mode::Train, &mut r);
        let dz = d.backward(&cache, &w);
        let proto = d.clone();
        assert_grad_close(
            dz.data(),
            z.data(),
            |zs| {
                probe(proto.forward(&Tensor::new(vec![3, 4], zs.to_vec()), Mode::Eval, &mut rng(0)).0.data(), w.data())
            },
            1e-3,
            1e-3,
        );
    }

    #[test]
    fn temporal_shapes_and_gradient() {
        let mut r = rng(8);
        let mut head = TemporalClassifier::new(4, 3, 2, 5, &mut r);
        let z = random_tensor(vec![2, 6, 4], &mut r);
        let (logits, hidden, cache) = head.forward(&z);
        assert_eq!(logits.shape(), &[2, 6, 5]);
        assert_eq!(hidden.shape(), &[2, 6, 6]);
        let w = random_tensor(vec![2, 6, 5], &mut r);
        let dz = head.backward(&cache, &w);
        let proto = head.clone();
        assert_grad_close(
            dz.data(),
            z.data(),
            |zs| probe(proto.forward(&Tensor::new(vec![2, 6, 4], zs.to_vec())).0.data(), w.data()),
            1e-2,
            1e-3,
        );
    }
}
