//! Seeded synthetic sleep-EEG corpora: Markov hypnograms, stage-specific
//! band-limited noise over a pink background, and per-domain shifts in
//! amplitude, spectral tilt and sampling rate.

pub mod signal;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{assign_splits, write_bundle, Manifest, ManifestEntry, Recording, StageLabel, NUM_CLASSES};

pub use signal::{band_power, synthesize_epoch};

/// One band-limited noise component of a stage profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandComponent {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    /// RMS amplitude in microvolts while active.
    pub amplitude: f64,
    /// Bursts per epoch; 0 means continuous.
    #[serde(default)]
    pub bursts: usize,
}

impl BandComponent {
    pub fn new(center_hz: f64, bandwidth_hz: f64, amplitude: f64) -> Self {
        BandComponent { center_hz, bandwidth_hz, amplitude, bursts: 0 }
    }
}

/// Acquisition differences applied to one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainShift {
    pub name: String,
    pub amplitude_scale: f64,
    pub spectral_tilt_db_per_decade: f64,
    pub sampling_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub recordings_per_subject: usize,
    pub epochs_per_recording: usize,
    /// Row-stochastic, indexed by class index.
    pub transition: [[f64; NUM_CLASSES]; NUM_CLASSES],
    /// Band profile per class index.
    pub profiles: Vec<Vec<BandComponent>>,
    /// RMS of the 1/f background in microvolts.
    pub background_amplitude: f64,
    /// Standard deviation of the per-epoch log-amplitude jitter applied to
    /// every component independently.
    pub amplitude_jitter: f64,
    /// Whole-epoch gain per class index, applied to components and
    /// background alike. Per-epoch z-scoring removes it, so a stage that
    /// differs from another only by gain can be told apart by context alone.
    #[serde(default = "unit_gains")]
    pub stage_gain: [f64; NUM_CLASSES],
    pub domains: Vec<DomainShift>,
    pub split_fractions: [f64; 3],
    pub seed: u64,
}

/// W: alpha with some beta and theta; N1: theta with residual alpha; N2:
/// spindle bursts over theta and some delta; N3: high-amplitude delta; REM:
/// the N1 mixture at lower overall gain (see [`default_stage_gain`]). Stages
/// overlap in band content and differ in the balance between bands, as in
/// real sleep EEG. All bands lie inside 0.5-30 Hz.
pub fn default_stage_profiles() -> Vec<Vec<BandComponent>> {
    let theta_dominant = vec![BandComponent::new(5.5, 3.0, 10.0), BandComponent::new(10.0, 4.0, 5.0)];
    vec![
        vec![
            BandComponent::new(10.0, 4.0, 12.0),
            BandComponent::new(20.0, 8.0, 4.0),
            BandComponent::new(5.5, 3.0, 4.0),
        ],
        theta_dominant.clone(),
        vec![
            BandComponent::new(5.5, 3.0, 7.0),
            BandComponent { center_hz: 13.0, bandwidth_hz: 2.0, amplitude: 16.0, bursts: 3 },
            BandComponent::new(1.25, 1.5, 8.0),
        ],
        vec![BandComponent::new(1.25, 1.5, 40.0), BandComponent::new(5.5, 3.0, 5.0)],
        theta_dominant,
    ]
}

/// REM is low-voltage N1-like activity: same spectral shape, 0.6 gain.
pub fn default_stage_gain() -> [f64; NUM_CLASSES] {
    [1.0, 1.0, 1.0, 1.0, 0.6]
}

fn unit_gains() -> [f64; NUM_CLASSES] {
    [1.0; NUM_CLASSES]
}

/// Sticky chain. N1 is a short stage entered from wake and left for N2;
/// REM is a long stage entered from N2. Only this context separates the two
/// after per-epoch normalization.
pub fn default_transition() -> [[f64; NUM_CLASSES]; NUM_CLASSES] {
    [
        [0.90, 0.08, 0.02, 0.00, 0.00],
        [0.08, 0.60, 0.32, 0.00, 0.00],
        [0.02, 0.00, 0.91, 0.04, 0.03],
        [0.01, 0.00, 0.08, 0.91, 0.00],
        [0.03, 0.00, 0.03, 0.00, 0.94],
    ]
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_subjects: 10,
            recordings_per_subject: 1,
            epochs_per_recording: 240,
            transition: default_transition(),
            profiles: default_stage_profiles(),
            background_amplitude: 6.0,
            amplitude_jitter: 0.3,
            stage_gain: default_stage_gain(),
            domains: vec![
                DomainShift {
                    name: "A".into(),
                    amplitude_scale: 1.0,
                    spectral_tilt_db_per_decade: 0.0,
                    sampling_rate_hz: 100.0,
                },
                DomainShift {
                    name: "B".into(),
                    amplitude_scale: 0.6,
                    spectral_tilt_db_per_decade: 8.0,
                    sampling_rate_hz: 125.0,
                },
                DomainShift {
                    name: "C".into(),
                    amplitude_scale: 1.8,
                    spectral_tilt_db_per_decade: -8.0,
                    sampling_rate_hz: 250.0,
                },
            ],
            split_fractions: [0.6, 0.2, 0.2],
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.transition.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("transition row {i} is not a probability distribution (sum {sum})")));
            }
        }
        if self.profiles.len() != NUM_CLASSES {
            return Err(Error::Config(format!("need {NUM_CLASSES} stage profiles, got {}", self.profiles.len())));
        }
        for (stage, profile) in self.profiles.iter().enumerate() {
            for c in profile {
                if !(c.amplitude > 0.0 && c.bandwidth_hz > 0.0 && c.center_hz > 0.0) {
                    return Err(Error::Config(format!(
                        "stage {stage}: band component {c:?} must have positive values"
                    )));
                }
            }
        }
        if self.stage_gain.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Config(format!("stage gains {:?} must be positive", self.stage_gain)));
        }
        if !(self.background_amplitude > 0.0) || !(self.amplitude_jitter >= 0.0) {
            return Err(Error::Config("background amplitude must be positive and jitter nonnegative".into()));
        }
        if self.n_subjects < 3 || self.recordings_per_subject == 0 || self.epochs_per_recording == 0 {
            return Err(Error::Config("need at least 3 subjects and one nonempty recording each".into()));
        }
        for d in &self.domains {
            if !(d.amplitude_scale > 0.0 && d.sampling_rate_hz > 0.0) {
                return Err(Error::Config(format!("domain {}: scale and sampling rate must be positive", d.name)));
            }
            for profile in &self.profiles {
                for c in profile {
                    if c.center_hz + c.bandwidth_hz / 2.0 >= d.sampling_rate_hz / 2.0 {
                        return Err(Error::Config(format!("domain {}: band {c:?} exceeds Nyquist", d.name)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self, name: &str) -> Result<&DomainShift> {
        self.domains.iter().find(|d| d.name == name).ok_or_else(|| Error::Config(format!("unknown domain {name}")))
    }
}

/// Mixes stream identifiers into one seed (SplitMix64 finalizer).
fn derive_seed(parts: &[u64]) -> u64 {
    let mut z = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Hypnogram of `n` epochs starting awake.
pub fn markov_hypnogram(
    transition: &[[f64; NUM_CLASSES]; NUM_CLASSES],
    n: usize,
    rng: &mut impl Rng,
) -> Vec<StageLabel> {
    let mut state = 0usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let row = &transition[state];
            state = (0..NUM_CLASSES)
                .find(|&j| {
                    acc += row[j];
                    u < acc
                })
                .unwrap_or_else(|| (0..NUM_CLASSES).rev().find(|&j| row[j] > 0.0).unwrap());
        }
        out.push(StageLabel::from_index(state).unwrap());
    }
    out
}

fn subject_id(domain: &str, s: usize) -> String {
    format!("{domain}-s{s:02}")
}

/// All recordings of one domain, in subject then night order.
pub fn generate_domain(spec: &SynthSpec, domain: &str) -> Result<Vec<Recording>> {
    spec.validate()?;
    let d_index = spec.domains.iter().position(|d| d.name == domain);
    let shift = spec.domain(domain)?;
    let d_index = d_index.unwrap() as u64;
    let mut out = Vec::new();
    for s in 0..spec.n_subjects {
        for r in 0..spec.recordings_per_subject {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[spec.seed, d_index, s as u64, r as u64]));
            let stages = markov_hypnogram(&spec.transition, spec.epochs_per_recording, &mut rng);
            let mut samples = Vec::new();
            for &stage in &stages {
                samples.extend(synthesize_epoch(spec, shift, stage, &mut rng));
            }
            out.push(Recording {
                subject_id: subject_id(domain, s),
                recording_id: format!("{}-n{}", subject_id(domain, s), r + 1),
                channel: "EEG synthetic".into(),
                sampling_rate_hz: shift.sampling_rate_hz,
                samples,
                stages,
            });
        }
    }
    Ok(out)
}

/// Subject-wise split for generated recordings.
pub fn manifest_for(spec: &SynthSpec, domain: &str, recordings: &[Recording]) -> Result<Manifest> {
    let mut hist: BTreeMap<String, [u64; NUM_CLASSES]> = BTreeMap::new();
    for r in recordings {
        let h = hist.entry(r.subject_id.clone()).or_insert([0; NUM_CLASSES]);
        for (a, b) in h.iter_mut().zip(r.stage_histogram()) {
            *a += b;
        }
    }
    let subjects: Vec<String> = hist.keys().cloned().collect();
    let split_assignment = assign_splits(&subjects, &hist, spec.split_fractions, spec.seed)?;
    Ok(Manifest {
        dataset_name: domain.to_string(),
        recordings: recordings
            .iter()
            .map(|r| ManifestEntry {
                recording_id: r.recording_id.clone(),
                subject_id: r.subject_id.clone(),
                path: r.recording_id.clone(),
                include: true,
            })
            .collect(),
        split_assignment,
    })
}

/// Writes `<out>/<domain>/<recording>/` bundles, `<out>/<domain>/manifest.json`
/// and `<out>/synth_spec.json`. Returns the manifests.
pub fn generate_corpus(spec: &SynthSpec, out: &Path) -> Result<Vec<Manifest>> {
    spec.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let spec_path = out.join("synth_spec.json");
    fs::write(&spec_path, serde_json::to_string_pretty(spec)?).map_err(|e| Error::io(&spec_path, e))?;
    let mut manifests = Vec::new();
    for d in &spec.domains {
        let dir = out.join(&d.name);
        let recordings = generate_domain(spec, &d.name)?;
        for r in &recordings {
            write_bundle(&dir.join(&r.recording_id), r)?;
        }
        let manifest = manifest_for(spec, &d.name, &recordings)?;
        manifest.save(&dir.join("manifest.json"))?;
        manifests.push(manifest);
    }
    Ok(manifests)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec { n_subjects: 3, epochs_per_recording: 6, ..SynthSpec::default() }
    }

    #[test]
    fn default_spec_is_valid() {
        SynthSpec::default().validate().unwrap();
        for row in default_transition() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for rate in SynthSpec::default().domains.iter().map(|d| d.sampling_rate_hz) {
            assert!([100.0, 125.0, 250.0].contains(&rate));
        }
    }

    #[test]
    fn band_centers_inside_passband() {
        for profile in default_stage_profiles() {
            for c in profile {
                assert!(c.center_hz >= 0.5 && c.center_hz <= 30.0, "{c:?}");
                assert!(c.center_hz + c.bandwidth_hz / 2.0 <= 30.0);
            }
        }
    }

    #[test]
    fn bad_transition_rejected() {
        let mut spec = small();
        spec.transition[2][2] += 0.1;
        assert!(matches!(generate_domain(&spec, "A"), Err(Error::Config(_))));
        let mut spec = small();
        spec.transition[0] = [1.2, -0.2, 0.0, 0.0, 0.0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn identity_chain_never_moves() {
        let mut id = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        for (i, row) in id.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let spec = SynthSpec { transition: id, ..small() };
        for r in generate_domain(&spec, "B").unwrap() {
            assert!(r.stages.iter().all(|s| *s == r.stages[0]));
        }
    }

    #[test]
    fn generation_is_seeded() {
        let spec = small();
        let a = generate_domain(&spec, "C").unwrap();
        assert_eq!(a, generate_domain(&spec, "C").unwrap());
        assert_eq!(a[0].samples.len(), 6 * 30 * 250);
        let other = generate_domain(&SynthSpec { seed: 8, ..spec }, "C").unwrap();
        assert_ne!(a[0].samples, other[0].samples);
    }

    #[test]
    fn stationary_prevalence_is_skewed() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = markov_hypnogram(&default_transition(), 200_000, &mut rng);
        let share = |s: StageLabel| h.iter().filter(|x| **x == s).count() as f64 / h.len() as f64;
        let n1 = share(StageLabel::N1);
        assert!((0.02..=0.06).contains(&n1), "N1 share {n1}");
        assert!(share(StageLabel::N2) > share(StageLabel::Rem));
    }

    #[test]
    fn corpus_round_trips_through_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small();
        let manifests = generate_corpus(&spec, dir.path()).unwrap();
        assert_eq!(manifests.len(), 3);
        let m = Manifest::load(&dir.path().join("B/manifest.json")).unwrap();
        assert_eq!(m, manifests[1]);
        let rec = crate::ingest::read_bundle(&dir.path().join("B").join(&m.recordings[0].path)).unwrap();
        assert_eq!(rec, generate_domain(&spec, "B").unwrap()[0]);
    }
}
