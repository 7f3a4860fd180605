//! Frequency-domain synthesis of one 30-second epoch and a periodogram
//! band-power measurement.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::ingest::{StageLabel, EPOCH_SECONDS};

use super::{BandComponent, DomainShift, SynthSpec};

const BACKGROUND_BAND: (f64, f64) = (0.5, 40.0);
const BURST_SECONDS: f64 = 1.0;

/// Amplitude weights for one-sided bins `1..n/2`, normalized so that the
/// synthesized component has unit expected mean square.
fn unit_shape(n: usize, rate: f64, shape: impl Fn(f64) -> f64) -> Vec<f64> {
    let half = n / 2;
    let mut w: Vec<f64> = (0..half).map(|k| if k == 0 { 0.0 } else { shape(k as f64 * rate / n as f64) }).collect();
    let energy: f64 = 2.0 * w.iter().map(|v| v * v).sum::<f64>();
    if energy > 0.0 {
        let s = n as f64 / energy.sqrt();
        for v in &mut w {
            *v *= s;
        }
    }
    w
}

fn tilt_gain(f: f64, db_per_decade: f64) -> f64 {
    if f <= 0.0 {
        0.0
    } else {
        10f64.powf(db_per_decade / 20.0 * f.log10())
    }
}

/// Real Gaussian noise with the given one-sided amplitude spectrum.
fn colored_noise(weights: &[f64], n: usize, planner: &mut FftPlanner<f64>, rng: &mut impl Rng) -> Vec<f64> {
    let mut spec = vec![Complex64::default(); n];
    for (k, &w) in weights.iter().enumerate().skip(1) {
        if w == 0.0 {
            continue;
        }
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let v = Complex64::new(re, im) * (w / std::f64::consts::SQRT_2);
        spec[k] = v;
        spec[n - k] = v.conj();
    }
    planner.plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|c| c.re / n as f64).collect()
}

fn burst_envelope(n: usize, rate: f64, bursts: usize, rng: &mut impl Rng) -> Vec<f64> {
    let len = ((BURST_SECONDS * rate) as usize).clamp(2, n);
    let mut env = vec![0.0; n];
    for _ in 0..bursts {
        let start = rng.random_range(0..=n - len);
        for i in 0..len {
            let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos();
            env[start + i] = f64::max(env[start + i], hann);
        }
    }
    env
}

fn component_shape(c: &BandComponent) -> impl Fn(f64) -> f64 + '_ {
    move |f| if (f - c.center_hz).abs() <= c.bandwidth_hz / 2.0 { 1.0 } else { 0.0 }
}

/// One epoch of `stage` under `shift`: the stage's band components plus the
/// pink background, each with its own log-normal amplitude jitter, then
/// tilted and scaled.
pub fn synthesize_epoch(spec: &SynthSpec, shift: &DomainShift, stage: StageLabel, rng: &mut impl Rng) -> Vec<f32> {
    let rate = shift.sampling_rate_hz;
    let n = (EPOCH_SECONDS * rate).round() as usize;
    let mut planner = FftPlanner::new();
    let jitter = |rng: &mut dyn rand::RngCore| {
        let z: f64 = rng.sample(StandardNormal);
        (spec.amplitude_jitter * z).exp()
    };
    let tilt = |f: f64| tilt_gain(f, shift.spectral_tilt_db_per_decade);

    let mut out = vec![0.0f64; n];
    let mut add =
        |weights: Vec<f64>, gain: f64, envelope: Option<Vec<f64>>, rng: &mut dyn rand::RngCore, out: &mut [f64]| {
            let tilted: Vec<f64> =
                weights.iter().enumerate().map(|(k, w)| w * gain * tilt(k as f64 * rate / n as f64)).collect();
            let x = colored_noise(&tilted, n, &mut planner, &mut &mut *rng);
            match envelope {
                Some(env) => out.iter_mut().zip(x.iter().zip(env)).for_each(|(o, (v, e))| *o += v * e),
                None => out.iter_mut().zip(&x).for_each(|(o, v)| *o += v),
            }
        };

    let (lo, hi) = BACKGROUND_BAND;
    let background = unit_shape(n, rate, |f| if f >= lo && f <= hi.min(rate / 2.0) { 1.0 / f.sqrt() } else { 0.0 });
    let g = spec.background_amplitude * jitter(rng);
    add(background, g, None, rng, &mut out);

    let class = stage.index().expect("synthesis needs a scoreable stage");
    for c in &spec.profiles[class] {
        let weights = unit_shape(n, rate, component_shape(c));
        let g = c.amplitude * jitter(rng);
        let env = (c.bursts > 0).then(|| burst_envelope(n, rate, c.bursts, rng));
        add(weights, g, env, rng, &mut out);
    }
    let scale = spec.stage_gain[class] * shift.amplitude_scale;
    out.into_iter().map(|v| (v * scale) as f32).collect()
}

/// Mean power of `samples` in `[lo_hz, hi_hz]` from the periodogram
/// (Parseval-scaled, so a full-band sum equals the mean square).
pub fn band_power(samples: &[f32], rate: f64, lo_hz: f64, hi_hz: f64) -> f64 {
    let n = samples.len();
    if n == 0 {
        return 0.0;
    }
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v as f64, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut total = 0.0;
    for (k, c) in buf.iter().enumerate() {
        let f = if k <= n / 2 { k as f64 } else { (n - k) as f64 } * rate / n as f64;
        if f >= lo_hz && f <= hi_hz {
            total += c.norm_sqr();
        }
    }
    total / (n as f64 * n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use StageLabel::*;

    fn no_jitter() -> SynthSpec {
        SynthSpec { amplitude_jitter: 0.0, ..SynthSpec::default() }
    }

    /// Direct DFT band power for cross-checking the FFT route.
    fn naive_band_power(x: &[f32], rate: f64, lo: f64, hi: f64) -> f64 {
        let n = x.len();
        let mut total = 0.0;
        for k in 0..n {
            let f = if k <= n / 2 { k } else { n - k } as f64 * rate / n as f64;
            if f < lo || f > hi {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                re += v as f64 * a.cos();
                im += v as f64 * a.sin();
            }
            total += re * re + im * im;
        }
        total / (n * n) as f64
    }

    #[test]
    fn band_power_matches_direct_dft() {
        let spec = no_jitter();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = synthesize_epoch(&spec, &spec.domains[0], N2, &mut rng);
        for (lo, hi) in [(0.5, 2.0), (4.0, 7.0), (11.0, 15.0)] {
            let a = band_power(&x, 100.0, lo, hi);
            let b = naive_band_power(&x, 100.0, lo, hi);
            assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn epoch_rms_tracks_amplitudes() {
        let spec = no_jitter();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = synthesize_epoch(&spec, &spec.domains[0], N3, &mut rng);
        let ms = x.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / x.len() as f64;
        let expected = 40.0f64.powi(2) + 6.0f64.powi(2);
        assert!((ms / expected - 1.0).abs() < 0.3, "{ms} vs {expected}");
    }

    #[test]
    fn n3_has_far_more_delta_than_w() {
        let spec = SynthSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mean_delta = |stage, rng: &mut ChaCha8Rng| {
            (0..20)
                .map(|_| band_power(&synthesize_epoch(&spec, &spec.domains[0], stage, rng), 100.0, 0.5, 2.0))
                .sum::<f64>()
                / 20.0
        };
        let (n3, w) = (mean_delta(N3, &mut rng), mean_delta(W, &mut rng));
        assert!(n3 >= 3.0 * w, "{n3} vs {w}");
    }

    #[test]
    fn tilt_reweights_high_frequencies() {
        let flat = no_jitter();
        let mut tilted = no_jitter();
        tilted.domains[0].spectral_tilt_db_per_decade = 20.0;
        let ratio = |spec: &SynthSpec| {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let x = synthesize_epoch(spec, &spec.domains[0], W, &mut rng);
            band_power(&x, 100.0, 8.0, 12.0) / band_power(&x, 100.0, 0.5, 2.0)
        };
        // +20 dB/decade multiplies power by f^2: ~10 Hz vs ~1 Hz gains ~100x
        let gain = ratio(&tilted) / ratio(&flat);
        assert!(gain > 30.0 && gain < 300.0, "{gain}");
    }
}
