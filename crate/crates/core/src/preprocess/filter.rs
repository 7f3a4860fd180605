//! Butterworth band-pass design (bilinear transform, second-order sections)
//! and zero-phase forward-backward filtering.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// One biquad `[b0, b1, b2, a0 = 1, a1, a2]`.
pub type Section = [f64; 6];

/// A cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Section>,
}

/// Designs an order-`order` Butterworth band-pass (the band-pass itself has
/// order `2 * order`) with edges `low_hz`, `high_hz` at `sampling_rate_hz`.
pub fn butter_bandpass(order: usize, low_hz: f64, high_hz: f64, sampling_rate_hz: f64) -> Result<SosFilter> {
    let nyquist = sampling_rate_hz / 2.0;
    if order == 0 {
        return Err(Error::Config("filter order must be positive".into()));
    }
    if !(low_hz > 0.0 && low_hz < high_hz) {
        return Err(Error::Config(format!("band edges {low_hz}..{high_hz} Hz are not increasing and positive")));
    }
    if high_hz >= nyquist {
        return Err(Error::Config(format!(
            "band edge {high_hz} Hz must lie below the Nyquist frequency {nyquist} Hz (sampling rate {sampling_rate_hz} Hz)"
        )));
    }
    let fs2 = 2.0 * sampling_rate_hz;
    let warp = |f: f64| fs2 * (std::f64::consts::PI * f / sampling_rate_hz).tan();
    let (w1, w2) = (warp(low_hz), warp(high_hz));
    let bw = w2 - w1;
    let w0_sq = w1 * w2;

    // Analog low-pass prototype poles on the unit circle's left half.
    let n = order as f64;
    let proto: Vec<Complex64> = (0..order)
        .map(|k| {
            let theta = std::f64::consts::PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
            Complex64::from_polar(1.0, theta)
        })
        .collect();

    // Low-pass to band-pass: each prototype pole splits into two.
    let mut poles = Vec::with_capacity(2 * order);
    for p in &proto {
        let half = p * bw / 2.0;
        let root = (half * half - w0_sq).sqrt();
        poles.push(half + root);
        poles.push(half - root);
    }
    // Gain of the analog band-pass: bw^order, with `order` zeros at s = 0.
    let analog_gain = bw.powi(order as i32);

    // Bilinear transform. Zeros at s = 0 map to z = 1, the `order` zeros at
    // infinity map to z = -1.
    let zpoles: Vec<Complex64> = poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
    let mut num = Complex64::new(fs2, 0.0).powi(order as i32);
    let mut den = Complex64::new(1.0, 0.0);
    for p in &poles {
        den *= fs2 - p;
    }
    // prod(fs2 - zeros) over the `order` zeros at the origin
    num *= 1.0;
    let digital_gain = analog_gain * (num / den).re;

    let mut upper: Vec<Complex64> = zpoles.into_iter().filter(|p| p.im > 0.0).collect();
    if upper.len() != order {
        return Err(Error::Config("band-pass design produced real poles; band too narrow".into()));
    }
    // Poles closest to the unit circle go last so early sections stay well scaled.
    upper.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    let mut sections: Vec<Section> = upper.iter().map(|p| [1.0, 0.0, -1.0, 1.0, -2.0 * p.re, p.norm_sqr()]).collect();
    for c in &mut sections[0][..3] {
        *c *= digital_gain;
    }
    Ok(SosFilter { sections })
}

impl SosFilter {
    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, sampling_rate_hz: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / sampling_rate_hz;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
            acc * (s[0] + s[1] * z1 + s[2] * z2) / (1.0 + s[4] * z1 + s[5] * z2)
        })
    }

    /// Steady-state initial conditions for a unit step input, per section.
    fn step_state(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let dc = (s[0] + s[1] + s[2]) / (1.0 + s[4] + s[5]);
                let z1 = scale * (dc - s[0]);
                let z2 = scale * (s[2] - s[5] * dc);
                scale *= dc;
                [z1, z2]
            })
            .collect()
    }

    /// Direct-form II transposed filtering in place, starting from `state`.
    fn run(&self, x: &mut [f64], mut state: Vec<[f64; 2]>) {
        for v in x.iter_mut() {
            let mut sample = *v;
            for (s, z) in self.sections.iter().zip(state.iter_mut()) {
                let y = s[0] * sample + z[0];
                z[0] = s[1] * sample - s[4] * y + z[1];
                z[1] = s[2] * sample - s[5] * y;
                sample = y;
            }
            *v = sample;
        }
    }

    /// Causal filtering from rest.
    pub fn filter(&self, x: &[f32]) -> Vec<f32> {
        let mut buf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        self.run(&mut buf, vec![[0.0; 2]; self.sections.len()]);
        buf.into_iter().map(|v| v as f32).collect()
    }

    /// Samples for the slowest pole to decay by `e^-5`.
    fn settle_len(&self) -> usize {
        let r = self.sections.iter().map(|s| s[5].abs().sqrt()).fold(0.0, f64::max);
        let tau = if r > 0.0 && r < 1.0 { -1.0 / r.ln() } else { 1.0 };
        ((5.0 * tau).ceil() as usize).max(3 * (2 * self.sections.len() + 1))
    }

    /// Zero-phase filtering: mirror padding long enough for the slowest pole
    /// to settle, a forward pass and a backward pass, each started from the
    /// step-response steady state scaled to the first sample.
    pub fn filtfilt(&self, x: &[f32]) -> Vec<f32> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = self.settle_len().min(n - 1);
        let xs: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(xs[i]);
        }
        ext.extend_from_slice(&xs);
        for i in 1..=pad {
            ext.push(xs[n - 1 - i]);
        }
        let zi = self.step_state();
        let scaled = |v: f64| zi.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();
        let x0 = ext[0];
        self.run(&mut ext, scaled(x0));
        ext.reverse();
        let y0 = ext[0];
        self.run(&mut ext, scaled(y0));
        ext.reverse();
        ext[pad..pad + n].iter().map(|&v| v as f32).collect()
    }
}

/// Zero-phase band-pass to [`super::BAND_LOW_HZ`, `super::BAND_HIGH_HZ`] with
/// the configured Butterworth order.
pub fn bandpass(samples: &[f32], sampling_rate_hz: f64) -> Result<Vec<f32>> {
    let sos = butter_bandpass(super::FILTER_ORDER, super::BAND_LOW_HZ, super::BAND_HIGH_HZ, sampling_rate_hz)?;
    Ok(sos.filtfilt(samples))
}
