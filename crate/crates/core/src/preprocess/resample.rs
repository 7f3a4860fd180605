//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc lowpass.

use crate::error::{Error, Result};

const KAISER_BETA: f64 = 5.0;
const HALF_TAPS_PER_PHASE: usize = 10;

/// Best rational approximation `up / down` of `to / from`.
fn ratio(from_hz: f64, to_hz: f64) -> (u64, u64) {
    let is_int = |v: f64| (v - v.round()).abs() < 1e-9;
    if is_int(from_hz) && is_int(to_hz) {
        let (a, b) = (to_hz.round() as u64, from_hz.round() as u64);
        let g = gcd(a, b);
        return (a / g, b / g);
    }
    // Continued-fraction expansion with bounded denominator.
    let x = to_hz / from_hz;
    let (mut h0, mut h1, mut k0, mut k1) = (0u64, 1u64, 1u64, 0u64);
    let mut r = x;
    for _ in 0..32 {
        let a = r.floor() as u64;
        let (h2, k2) = (a * h1 + h0, a * k1 + k0);
        if k2 > 10_000 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac < 1e-12 || ((h1 as f64 / k1 as f64) - x).abs() < 1e-12 {
            break;
        }
        r = 1.0 / frac;
    }
    (h1, k1)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Lowpass prototype at the upsampled rate: cutoff `1 / max(up, down)` of
/// Nyquist, unit DC gain, scaled by `up` to compensate zero stuffing.
fn design(up: u64, down: u64) -> Vec<f64> {
    let max_rate = up.max(down) as f64;
    let half = HALF_TAPS_PER_PHASE * up.max(down) as usize;
    let len = 2 * half + 1;
    let cutoff = 1.0 / max_rate;
    let denom = bessel_i0(KAISER_BETA);
    let mut h: Vec<f64> = (0..len)
        .map(|n| {
            let m = n as f64 - half as f64;
            let arg = std::f64::consts::PI * cutoff * m;
            let sinc = if m == 0.0 { 1.0 } else { arg.sin() / arg };
            let ratio = 2.0 * n as f64 / (len - 1) as f64 - 1.0;
            let window = bessel_i0(KAISER_BETA * (1.0 - ratio * ratio).max(0.0).sqrt()) / denom;
            cutoff * sinc * window
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v *= up as f64 / sum;
    }
    h
}

/// Resamples `samples` from `from_hz` down to `to_hz`.
pub fn resample(samples: &[f32], from_hz: f64, to_hz: f64) -> Result<Vec<f32>> {
    if !(from_hz > 0.0 && to_hz > 0.0 && from_hz.is_finite() && to_hz.is_finite()) {
        return Err(Error::Config(format!("sampling rates must be positive, got {from_hz} -> {to_hz} Hz")));
    }
    if to_hz > from_hz {
        return Err(Error::Config(format!("upsampling from {from_hz} Hz to {to_hz} Hz is not supported")));
    }
    if to_hz == from_hz {
        return Ok(samples.to_vec());
    }
    let (up, down) = ratio(from_hz, to_hz);
    let h = design(up, down);
    let half = (h.len() - 1) / 2;
    let n = samples.len();
    let n_out = (n as f64 * to_hz / from_hz).round() as usize;
    let (up_i, down_i) = (up as i64, down as i64);
    let mut out = Vec::with_capacity(n_out);
    for m in 0..n_out as i64 {
        // Output m sits at position m * down on the zero-stuffed grid; taps
        // reach back `half` and forward `half` positions.
        let center = m * down_i + half as i64;
        let lo = (center - (h.len() as i64 - 1)).max(0);
        let hi = center.min(n as i64 * up_i - 1);
        let mut acc = 0.0f64;
        let mut i = (lo + up_i - 1) / up_i;
        while i * up_i <= hi {
            acc += h[(center - i * up_i) as usize] * samples[i as usize] as f64;
            i += 1;
        }
        out.push(acc as f32);
    }
    Ok(out)
}
