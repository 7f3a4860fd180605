//! Short-time Fourier transform of one epoch into a normalized
//! frequency-by-time magnitude image.

use std::sync::Arc;

use rustfft::num_complex::Complex32;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

use super::{EPOCH_SAMPLES, FREQ_BINS, TIME_FRAMES};

pub const WINDOW_LEN: usize = 100;
pub const HOP: usize = 50;
pub const FFT_LEN: usize = 150;

/// Reusable STFT plan with a periodic Hamming window.
pub struct Stft {
    fft: Arc<dyn Fft<f32>>,
    window: Vec<f32>,
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

impl Stft {
    pub fn new() -> Self {
        let window = (0..WINDOW_LEN)
            .map(|n| (0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / WINDOW_LEN as f64).cos()) as f32)
            .collect();
        Stft { fft: FftPlanner::new().plan_fft_forward(FFT_LEN), window }
    }

    /// Row-major `FREQ_BINS x TIME_FRAMES` matrix: `log1p(|X|)`, then min-max
    /// scaled to [0, 1] over the whole epoch.
    pub fn compute(&self, epoch: &[f32]) -> Result<Vec<f32>> {
        if epoch.len() != EPOCH_SAMPLES {
            return Err(Error::shape(format!("epoch of {EPOCH_SAMPLES} samples"), format!("{} samples", epoch.len())));
        }
        let mut out = vec![0.0f32; FREQ_BINS * TIME_FRAMES];
        let mut buf = vec![Complex32::default(); FFT_LEN];
        for t in 0..TIME_FRAMES {
            let start = t * HOP;
            buf.fill(Complex32::default());
            for (i, w) in self.window.iter().enumerate() {
                if let Some(&x) = epoch.get(start + i) {
                    buf[i].re = x * w;
                }
            }
            self.fft.process(&mut buf);
            for f in 0..FREQ_BINS {
                out[f * TIME_FRAMES + t] = buf[f].norm().ln_1p();
            }
        }
        let (lo, hi) = out.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let range = hi - lo;
        if range > 0.0 {
            for v in &mut out {
                *v = (*v - lo) / range;
            }
        } else {
            out.fill(0.0);
        }
        Ok(out)
    }
}

/// One-shot convenience over [`Stft::compute`].
pub fn spectrogram(epoch: &[f32]) -> Result<Vec<f32>> {
    Stft::new().compute(epoch)
}
