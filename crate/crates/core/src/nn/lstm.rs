//! Stacked bidirectional LSTM with backpropagation through time.
//!
//! Gate layout follows the common `[input, forget, cell, output]` ordering
//! within the `4H` axis. Sequences are batch-major: `[batch, time, features]`.

use super::activation::sigmoid;
use super::{gemm, init, Module, Param, Rng, Tensor};

/// One direction of one layer.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub w_ih: Param,
    pub w_hh: Param,
    pub bias: Param,
    input: usize,
    hidden: usize,
}

pub struct CellCache {
    x: Tensor,
    /// Post-activation gates per processing step, each `[batch, 4H]`.
    gates: Vec<Vec<f32>>,
    /// Cell state after each processing step.
    cells: Vec<Vec<f32>>,
    /// Hidden state entering each processing step.
    h_prev: Vec<Vec<f32>>,
    reverse: bool,
}

impl LstmCell {
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let w_ih = init::fan_in_uniform(4 * hidden * input, hidden, rng);
        let mut w_hh = Vec::with_capacity(4 * hidden * hidden);
        for _ in 0..4 {
            w_hh.extend(init::orthogonal(hidden, hidden, rng));
        }
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].fill(1.0);
        Self {
            w_ih: Param::new(format!("{name}.w_ih"), vec![4 * hidden, input], w_ih),
            w_hh: Param::new(format!("{name}.w_hh"), vec![4 * hidden, hidden], w_hh),
            bias: Param::new(format!("{name}.bias"), vec![4 * hidden], bias),
            input,
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Runs the recurrence over `x` (`[B, T, input]`), right-to-left when
    /// `reverse`. Output is `[B, T, H]` aligned with the input time axis.
    pub fn forward(&self, x: &Tensor, reverse: bool) -> (Tensor, CellCache) {
        let (b, t, d) = (x.dim(0), x.dim(1), x.dim(2));
        assert_eq!(d, self.input);
        let h4 = 4 * self.hidden;
        let hs = self.hidden;

        let mut xp = Vec::with_capacity(b * t * h4);
        for _ in 0..b * t {
            xp.extend_from_slice(&self.bias.value);
        }
        gemm(b * t, d, h4, x.data(), false, &self.w_ih.value, true, &mut xp, 1.0);

        let mut out = vec![0.0f32; b * t * hs];
        let mut h = vec![0.0f32; b * hs];
        let mut c = vec![0.0f32; b * hs];
        let mut cache = CellCache {
            x: x.clone(),
            gates: Vec::with_capacity(t),
            cells: Vec::with_capacity(t),
            h_prev: Vec::with_capacity(t),
            reverse,
        };
        let mut pre = vec![0.0f32; b * h4];
        for step in 0..t {
            let ti = if reverse { t - 1 - step } else { step };
            for bi in 0..b {
                let src = &xp[(bi * t + ti) * h4..(bi * t + ti + 1) * h4];
                pre[bi * h4..(bi + 1) * h4].copy_from_slice(src);
            }
            gemm(b, hs, h4, &h, false, &self.w_hh.value, true, &mut pre, 1.0);
            cache.h_prev.push(h.clone());
            let mut gates = vec![0.0f32; b * h4];
            for bi in 0..b {
                let p = &pre[bi * h4..(bi + 1) * h4];
                let g = &mut gates[bi * h4..(bi + 1) * h4];
                for j in 0..hs {
                    let ig = sigmoid(p[j]);
                    let fg = sigmoid(p[hs + j]);
                    let cg = p[2 * hs + j].tanh();
                    let og = sigmoid(p[3 * hs + j]);
                    g[j] = ig;
                    g[hs + j] = fg;
                    g[2 * hs + j] = cg;
                    g[3 * hs + j] = og;
                    let cell = fg * c[bi * hs + j] + ig * cg;
                    c[bi * hs + j] = cell;
                    let hv = og * cell.tanh();
                    h[bi * hs + j] = hv;
                    out[(bi * t + ti) * hs + j] = hv;
                }
            }
            cache.gates.push(gates);
            cache.cells.push(c.clone());
        }
        (Tensor::new(vec![b, t, hs], out), cache)
    }

    pub fn backward(&mut self, cache: &CellCache, grad_out: &Tensor) -> Tensor {
        let x = &cache.x;
        let (b, t, d) = (x.dim(0), x.dim(1), x.dim(2));
        let hs = self.hidden;
        let h4 = 4 * hs;
        assert_eq!(grad_out.shape(), &[b, t, hs]);
        let dout = grad_out.data();

        let mut dxp = vec![0.0f32; b * t * h4];
        let mut dh_carry = vec![0.0f32; b * hs];
        let mut dc_carry = vec![0.0f32; b * hs];
        let mut dgates = vec![0.0f32; b * h4];
        let zeros = vec![0.0f32; b * hs];
        for step in (0..t).rev() {
            let ti = if cache.reverse { t - 1 - step } else { step };
            let gates = &cache.gates[step];
            let cell = &cache.cells[step];
            let c_prev = if step == 0 { &zeros } else { &cache.cells[step - 1] };
            for bi in 0..b {
                for j in 0..hs {
                    let k = bi * hs + j;
                    let g = &gates[bi * h4..(bi + 1) * h4];
                    let (ig, fg, cg, og) = (g[j], g[hs + j], g[2 * hs + j], g[3 * hs + j]);
                    let dh = dout[(bi * t + ti) * hs + j] + dh_carry[k];
                    let tc = cell[k].tanh();
                    let d_o = dh * tc;
                    let dc = dh * og * (1.0 - tc * tc) + dc_carry[k];
                    let di = dc * cg;
                    let dg = dc * ig;
                    let df = dc * c_prev[k];
                    dc_carry[k] = dc * fg;
                    let dg_row = &mut dgates[bi * h4..(bi + 1) * h4];
                    dg_row[j] = di * ig * (1.0 - ig);
                    dg_row[hs + j] = df * fg * (1.0 - fg);
                    dg_row[2 * hs + j] = dg * (1.0 - cg * cg);
                    dg_row[3 * hs + j] = d_o * og * (1.0 - og);
                }
                let row = &dgates[bi * h4..(bi + 1) * h4];
                dxp[(bi * t + ti) * h4..(bi * t + ti + 1) * h4].copy_from_slice(row);
            }
            gemm(h4, b, hs, &dgates, true, &cache.h_prev[step], false, &mut self.w_hh.grad, 1.0);
            gemm(b, h4, hs, &dgates, false, &self.w_hh.value, false, &mut dh_carry, 0.0);
        }
        gemm(h4, b * t, d, &dxp, true, x.data(), false, &mut self.w_ih.grad, 1.0);
        for row in dxp.chunks(h4) {
            for (g, v) in self.bias.grad.iter_mut().zip(row) {
                *g += v;
            }
        }
        let mut dx = vec![0.0f32; b * t * d];
        gemm(b * t, h4, d, &dxp, false, &self.w_ih.value, false, &mut dx, 0.0);
        Tensor::new(vec![b, t, d], dx)
    }
}

impl Module for LstmCell {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.w_ih);
        f(&self.w_hh);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w_ih);
        f(&mut self.w_hh);
        f(&mut self.bias);
    }
}

/// A stack of bidirectional layers; each layer's output concatenates the
/// forward and backward hidden states (`2H` features).
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub layers: Vec<(LstmCell, LstmCell)>,
    hidden: usize,
}

pub struct BiLstmCache {
    layers: Vec<(CellCache, CellCache)>,
}

fn concat_last(a: &Tensor, b: &Tensor) -> Tensor {
    let (bs, t, h) = (a.dim(0), a.dim(1), a.dim(2));
    let mut out = Vec::with_capacity(bs * t * 2 * h);
    for (ra, rb) in a.data().chunks(h).zip(b.data().chunks(h)) {
        out.extend_from_slice(ra);
        out.extend_from_slice(rb);
    }
    Tensor::new(vec![bs, t, 2 * h], out)
}

fn split_last(x: &Tensor) -> (Tensor, Tensor) {
    let (bs, t, h2) = (x.dim(0), x.dim(1), x.dim(2));
    let h = h2 / 2;
    let mut a = Vec::with_capacity(bs * t * h);
    let mut b = Vec::with_capacity(bs * t * h);
    for row in x.data().chunks(h2) {
        a.extend_from_slice(&row[..h]);
        b.extend_from_slice(&row[h..]);
    }
    (Tensor::new(vec![bs, t, h], a), Tensor::new(vec![bs, t, h], b))
}

impl BiLstm {
    pub fn new(name: &str, input: usize, hidden: usize, layers: usize, rng: &mut Rng) -> Self {
        let mut stack = Vec::with_capacity(layers);
        for l in 0..layers {
            let width = if l == 0 { input } else { 2 * hidden };
            stack.push((
                LstmCell::new(&format!("{name}.l{l}.fwd"), width, hidden, rng),
                LstmCell::new(&format!("{name}.l{l}.bwd"), width, hidden, rng),
            ));
        }
        Self { layers: stack, hidden }
    }

    pub fn output_width(&self) -> usize {
        2 * self.hidden
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, BiLstmCache) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (fwd, bwd) in &self.layers {
            let (hf, cf) = fwd.forward(&cur, false);
            let (hb, cb) = bwd.forward(&cur, true);
            cur = concat_last(&hf, &hb);
            caches.push((cf, cb));
        }
        (cur, BiLstmCache { layers: caches })
    }

    pub fn backward(&mut self, cache: &BiLstmCache, grad_out: &Tensor) -> Tensor {
        let mut grad = grad_out.clone();
        for ((fwd, bwd), (cf, cb)) in self.layers.iter_mut().zip(&cache.layers).rev() {
            let (gf, gb) = split_last(&grad);
            let mut dx = fwd.backward(cf, &gf);
            dx.add_assign(&bwd.backward(cb, &gb));
            grad = dx;
        }
        grad
    }
}

impl Module for BiLstm {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        for (a, b) in &self.layers {
            a.visit(f);
            b.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for (a, b) in &mut self.layers {
            a.visit_mut(f);
            b.visit_mut(f);
        }
    }
}
