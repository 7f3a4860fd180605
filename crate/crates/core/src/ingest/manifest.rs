//! Dataset manifests and subject-wise train/validation/test assignment.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NUM_CLASSES;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

fn default_include() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub recording_id: String,
    pub subject_id: String,
    /// Bundle directory, relative to the manifest's own directory.
    pub path: String,
    /// Cohort-level inclusion flag (for example a precomputed AHI screen).
    #[serde(default = "default_include")]
    pub include: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_name: String,
    pub recordings: Vec<ManifestEntry>,
    pub split_assignment: BTreeMap<String, Split>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    /// Distinct subjects in recording order of first appearance.
    pub fn subjects(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.recordings.iter().filter(|r| seen.insert(r.subject_id.clone())).map(|r| r.subject_id.clone()).collect()
    }

    pub fn split_of(&self, subject_id: &str) -> Option<Split> {
        self.split_assignment.get(subject_id).copied()
    }

    /// Included recordings whose subject belongs to `split`.
    pub fn recordings_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.recordings.iter().filter(move |r| r.include && self.split_of(&r.subject_id) == Some(split))
    }

    /// Unique recording ids and a split for every subject.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for r in &self.recordings {
            if !ids.insert(&r.recording_id) {
                return Err(Error::Integrity(format!(
                    "manifest {}: duplicate recording id {}",
                    self.dataset_name, r.recording_id
                )));
            }
            if !self.split_assignment.is_empty() && !self.split_assignment.contains_key(&r.subject_id) {
                return Err(Error::Integrity(format!(
                    "manifest {}: subject {} has no split",
                    self.dataset_name, r.subject_id
                )));
            }
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items, then at least one per split.
fn split_sizes(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes = [0usize; 3];
    for i in 0..3 {
        sizes[i] = quotas[i].floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    // stable: ties go to the earlier split
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap()
    });
    let mut left = n - sizes.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let donor = (0..3).max_by_key(|&i| (sizes[i], std::cmp::Reverse(i))).unwrap();
        sizes[donor] -= 1;
        sizes[empty] += 1;
    }
    sizes
}

/// Assigns every subject to train/val/test.
///
/// Split sizes are the largest-remainder rounding of `fractions` with at
/// least one subject per split. Subjects are shuffled with `seed`, stably
/// sorted by the share of N3 and REM in their hypnogram, then dealt in the
/// repeating order train, train, train, val, test, skipping splits that are
/// already full.
pub fn assign_splits(
    subjects: &[String],
    stage_histograms: &BTreeMap<String, [u64; NUM_CLASSES]>,
    fractions: [f64; 3],
    seed: u64,
) -> Result<BTreeMap<String, Split>> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be nonnegative and sum to 1")));
    }
    let unique: BTreeSet<&String> = subjects.iter().collect();
    if unique.len() != subjects.len() {
        return Err(Error::Config("subject list contains duplicates".into()));
    }
    if subjects.len() < Split::ALL.len() {
        return Err(Error::Config(format!("{} subjects cannot fill {} splits", subjects.len(), Split::ALL.len())));
    }
    let sizes = split_sizes(subjects.len(), fractions);

    let deep_share = |s: &String| -> f64 {
        match stage_histograms.get(s) {
            Some(h) => {
                let total: u64 = h.iter().sum();
                if total == 0 {
                    0.0
                } else {
                    (h[3] + h[4]) as f64 / total as f64
                }
            }
            None => 0.0,
        }
    };
    let mut order: Vec<&String> = subjects.iter().collect();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by(|a, b| deep_share(a).partial_cmp(&deep_share(b)).unwrap());

    const STRIPE: [Split; 5] = [Split::Train, Split::Train, Split::Train, Split::Val, Split::Test];
    let mut remaining = sizes;
    let mut cursor = 0;
    let mut out = BTreeMap::new();
    for subject in order {
        loop {
            let split = STRIPE[cursor % STRIPE.len()];
            cursor += 1;
            let slot = &mut remaining[split as usize];
            if *slot > 0 {
                *slot -= 1;
                out.insert(subject.clone(), split);
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("subj{i:02}")).collect()
    }

    fn counts(a: &BTreeMap<String, Split>) -> [usize; 3] {
        let mut c = [0; 3];
        for s in a.values() {
            c[*s as usize] += 1;
        }
        c
    }

    #[test]
    fn twenty_subjects_give_12_4_4() {
        let subjects = names(20);
        let a = assign_splits(&subjects, &BTreeMap::new(), [0.6, 0.2, 0.2], 42).unwrap();
        assert_eq!(counts(&a), [12, 4, 4]);
    }

    #[test]
    fn three_subjects_give_one_each() {
        let a = assign_splits(&names(3), &BTreeMap::new(), [0.6, 0.2, 0.2], 1).unwrap();
        assert_eq!(counts(&a), [1, 1, 1]);
    }

    #[test]
    fn too_few_subjects_is_configuration_error() {
        assert!(matches!(assign_splits(&names(2), &BTreeMap::new(), [0.6, 0.2, 0.2], 1), Err(Error::Config(_))));
        assert!(assign_splits(&names(5), &BTreeMap::new(), [0.5, 0.2, 0.2], 1).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let subjects = names(17);
        let hist: BTreeMap<String, [u64; 5]> = subjects
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), [10, 1, 20, (i % 4) as u64, (i % 3) as u64]))
            .collect();
        let a = assign_splits(&subjects, &hist, [0.6, 0.2, 0.2], 7).unwrap();
        let b = assign_splits(&subjects, &hist, [0.6, 0.2, 0.2], 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn manifest_rejects_duplicate_recordings() {
        let entry = ManifestEntry { recording_id: "r".into(), subject_id: "s".into(), path: "r".into(), include: true };
        let m = Manifest {
            dataset_name: "d".into(),
            recordings: vec![entry.clone(), entry],
            split_assignment: BTreeMap::new(),
        };
        assert!(m.validate().is_err());
    }

    proptest! {
        #[test]
        fn splits_partition_subjects_and_keep_recordings_together(
            n_subjects in 3usize..40,
            nights in proptest::collection::vec(1usize..3, 40),
            seed in any::<u64>(),
        ) {
            let subjects = names(n_subjects);
            let a = assign_splits(&subjects, &BTreeMap::new(), [0.6, 0.2, 0.2], seed).unwrap();
            prop_assert_eq!(a.len(), n_subjects);
            prop_assert!(counts(&a).iter().all(|&c| c >= 1));
            let mut recordings = Vec::new();
            for (i, s) in subjects.iter().enumerate() {
                for night in 0..nights[i] {
                    recordings.push(ManifestEntry {
                        recording_id: format!("{s}_n{night}"),
                        subject_id: s.clone(),
                        path: String::new(),
                        include: true,
                    });
                }
            }
            let m = Manifest { dataset_name: "d".into(), recordings, split_assignment: a };
            prop_assert!(m.validate().is_ok());
            let mut seen: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
            for split in Split::ALL {
                for r in m.recordings_in(split) {
                    seen.entry(&r.subject_id).or_default().insert(split);
                }
            }
            prop_assert_eq!(seen.len(), n_subjects);
            prop_assert!(seen.values().all(|s| s.len() == 1));
        }
    }
}
