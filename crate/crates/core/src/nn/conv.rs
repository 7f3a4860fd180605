//! Square-kernel 2-D convolution with "same" zero padding, via im2col + GEMM.

use super::{gemm, init, Module, Param, Rng, Tensor};

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
}

struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    out_h: usize,
    out_w: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Output columns `[lo, hi)` whose input column `ox * stride + kx - pad` is
/// inside the image.
fn valid_cols(g: &Geometry, kx: usize) -> (usize, usize) {
    let lo = if kx >= g.pad { 0 } else { (g.pad - kx).div_ceil(g.stride) };
    let reach = g.width + g.pad;
    let hi = if reach <= kx { 0 } else { ((reach - kx - 1) / g.stride + 1).min(g.out_w) };
    (lo.min(hi), hi)
}

fn im2col(img: &[f32], g: &Geometry, cols: &mut [f32]) {
    let out_hw = g.col_cols();
    for c in 0..g.channels {
        let plane = &img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let dst = &mut cols[row * out_hw..(row + 1) * out_hw];
                let (lo, hi) = valid_cols(g, kx);
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    line[..lo].fill(0.0);
                    line[hi..].fill(0.0);
                    let first = lo * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        line[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                    } else {
                        for (v, &s) in line[lo..hi].iter_mut().zip(src[first..].iter().step_by(g.stride)) {
                            *v = s;
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], g: &Geometry, img: &mut [f32]) {
    let out_hw = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let src = &cols[row * out_hw..(row + 1) * out_hw];
                let (lo, hi) = valid_cols(g, kx);
                if lo >= hi {
                    continue;
                }
                let first = lo * g.stride + kx - g.pad;
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let line = &src[oy * g.out_w + lo..oy * g.out_w + hi];
                    for (d, &v) in dst[first..].iter_mut().step_by(g.stride).zip(line) {
                        *d += v;
                    }
                }
            }
        }
    }
}

impl Conv2d {
    /// A bias-free convolution; it is always followed by batch normalization.
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut Rng,
    ) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        assert!(stride >= 1);
        let fan_in = in_channels * kernel * kernel;
        let weight = Param::new(
            format!("{name}.weight"),
            vec![out_channels, in_channels, kernel, kernel],
            init::fan_in_uniform(out_channels * fan_in, fan_in, rng),
        );
        Self { weight, in_channels, out_channels, kernel, stride }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn output_hw(&self, height: usize, width: usize) -> (usize, usize) {
        let pad = self.kernel / 2;
        ((height + 2 * pad - self.kernel) / self.stride + 1, (width + 2 * pad - self.kernel) / self.stride + 1)
    }

    fn geometry(&self, x: &Tensor) -> Geometry {
        assert_eq!(x.shape().len(), 4, "conv input must be NCHW");
        assert_eq!(x.dim(1), self.in_channels, "conv input channels");
        let (out_h, out_w) = self.output_hw(x.dim(2), x.dim(3));
        Geometry {
            channels: self.in_channels,
            height: x.dim(2),
            width: x.dim(3),
            out_h,
            out_w,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.kernel / 2,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let g = self.geometry(x);
        let n = x.dim(0);
        let in_len = g.channels * g.height * g.width;
        let out_len = self.out_channels * g.col_cols();
        let mut cols = vec![0.0; g.col_rows() * g.col_cols()];
        let mut out = vec![0.0; n * out_len];
        for i in 0..n {
            im2col(&x.data()[i * in_len..(i + 1) * in_len], &g, &mut cols);
            gemm(
                self.out_channels,
                g.col_rows(),
                g.col_cols(),
                &self.weight.value,
                false,
                &cols,
                false,
                &mut out[i * out_len..(i + 1) * out_len],
                0.0,
            );
        }
        Tensor::new(vec![n, self.out_channels, g.out_h, g.out_w], out)
    }

    /// Accumulates the weight gradient and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Tensor {
        let g = self.geometry(x);
        let n = x.dim(0);
        assert_eq!(grad_out.shape(), &[n, self.out_channels, g.out_h, g.out_w]);
        let in_len = g.channels * g.height * g.width;
        let out_len = self.out_channels * g.col_cols();
        let mut cols = vec![0.0; g.col_rows() * g.col_cols()];
        let mut dcols = vec![0.0; g.col_rows() * g.col_cols()];
        let mut dx = vec![0.0; n * in_len];
        for i in 0..n {
            let dout = &grad_out.data()[i * out_len..(i + 1) * out_len];
            im2col(&x.data()[i * in_len..(i + 1) * in_len], &g, &mut cols);
            gemm(self.out_channels, g.col_cols(), g.col_rows(), dout, false, &cols, true, &mut self.weight.grad, 1.0);
            gemm(g.col_rows(), self.out_channels, g.col_cols(), &self.weight.value, true, dout, false, &mut dcols, 0.0);
            col2im(&dcols, &g, &mut dx[i * in_len..(i + 1) * in_len]);
        }
        Tensor::new(x.shape().to_vec(), dx)
    }
}

impl Module for Conv2d {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
    }
}
