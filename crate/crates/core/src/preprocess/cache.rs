//! On-disk cache of preprocessed recordings: a little-endian f32 tensor file
//! plus a JSON sidecar with labels, indices and pipeline parameters.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::StageLabel;

use super::{PipelineParams, SpectrogramEpoch, FREQ_BINS, TIME_FRAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheSidecar {
    pub recording_id: String,
    pub subject_id: String,
    pub source_sampling_rate_hz: f64,
    pub shape: [usize; 3],
    pub labels: Vec<String>,
    pub epoch_indices: Vec<usize>,
    pub params: PipelineParams,
}

/// A recording after preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedRecording {
    pub subject_id: String,
    pub recording_id: String,
    pub source_sampling_rate_hz: f64,
    pub epochs: Vec<SpectrogramEpoch>,
}

fn paths(dir: &Path, recording_id: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{recording_id}.f32le")), dir.join(format!("{recording_id}.json")))
}

pub fn write_cache(dir: &Path, rec: &PreprocessedRecording, params: &PipelineParams) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (data_path, meta_path) = paths(dir, &rec.recording_id);
    let mut bytes = Vec::with_capacity(rec.epochs.len() * FREQ_BINS * TIME_FRAMES * 4);
    for e in &rec.epochs {
        for v in &e.matrix {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
    let sidecar = CacheSidecar {
        recording_id: rec.recording_id.clone(),
        subject_id: rec.subject_id.clone(),
        source_sampling_rate_hz: rec.source_sampling_rate_hz,
        shape: [rec.epochs.len(), FREQ_BINS, TIME_FRAMES],
        labels: rec.epochs.iter().map(|e| e.label.as_str().to_string()).collect(),
        epoch_indices: rec.epochs.iter().map(|e| e.epoch_index).collect(),
        params: params.clone(),
    };
    let text = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
}

/// Reads a cached recording. Returns `Ok(None)` when the cache is absent or
/// was produced with different pipeline parameters.
pub fn read_cache(dir: &Path, recording_id: &str, params: &PipelineParams) -> Result<Option<PreprocessedRecording>> {
    let (data_path, meta_path) = paths(dir, recording_id);
    if !meta_path.exists() || !data_path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let sidecar: CacheSidecar = serde_json::from_str(&text)?;
    if &sidecar.params != params {
        return Ok(None);
    }
    let rec = decode(&data_path, sidecar)?;
    Ok(Some(rec))
}

/// Reads every cached recording in `dir` regardless of parameters, sorted by
/// recording id.
pub fn read_cache_dir(dir: &Path) -> Result<Vec<PreprocessedRecording>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut metas: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| p.with_extension("f32le").exists())
        .collect();
    metas.sort();
    metas
        .into_iter()
        .map(|meta_path| {
            let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            let sidecar: CacheSidecar = serde_json::from_str(&text)?;
            decode(&meta_path.with_extension("f32le"), sidecar)
        })
        .collect()
}

fn decode(data_path: &Path, sidecar: CacheSidecar) -> Result<PreprocessedRecording> {
    let bytes = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    let [n, f, t] = sidecar.shape;
    if f != FREQ_BINS || t != TIME_FRAMES || bytes.len() != n * f * t * 4 {
        return Err(Error::Integrity(format!(
            "{}: cache holds {} bytes, sidecar shape {:?}",
            data_path.display(),
            bytes.len(),
            sidecar.shape
        )));
    }
    if sidecar.labels.len() != n || sidecar.epoch_indices.len() != n {
        return Err(Error::Integrity(format!(
            "{}: sidecar label or index count differs from {n}",
            data_path.display()
        )));
    }
    let cell = f * t;
    let epochs = (0..n)
        .map(|i| {
            let label: StageLabel = sidecar.labels[i]
                .parse()
                .map_err(|_| Error::parse("label", format!("bad cached label {:?}", sidecar.labels[i])))?;
            let matrix = bytes[i * cell * 4..(i + 1) * cell * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(SpectrogramEpoch {
                matrix,
                label,
                epoch_index: sidecar.epoch_indices[i],
                recording_id: sidecar.recording_id.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreprocessedRecording {
        subject_id: sidecar.subject_id,
        recording_id: sidecar.recording_id,
        source_sampling_rate_hz: sidecar.source_sampling_rate_hz,
        epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PreprocessedRecording {
        let epochs = (0..3)
            .map(|i| SpectrogramEpoch {
                matrix: (0..FREQ_BINS * TIME_FRAMES).map(|k| (k + i) as f32 / 5000.0).collect(),
                label: StageLabel::from_index(i).unwrap(),
                epoch_index: i * 2,
                recording_id: "r1".into(),
            })
            .collect();
        PreprocessedRecording {
            subject_id: "s1".into(),
            recording_id: "r1".into(),
            source_sampling_rate_hz: 125.0,
            epochs,
        }
    }

    #[test]
    fn round_trip_and_invalidation() {
        let dir = tempfile::tempdir().unwrap();
        let params = PipelineParams::default();
        let rec = sample();
        write_cache(dir.path(), &rec, &params).unwrap();
        assert_eq!(read_cache(dir.path(), "r1", &params).unwrap(), Some(rec.clone()));
        let other = PipelineParams { band_high_hz: 25.0, ..params.clone() };
        assert_eq!(read_cache(dir.path(), "r1", &other).unwrap(), None);
        assert_eq!(read_cache(dir.path(), "missing", &params).unwrap(), None);
        assert_eq!(read_cache_dir(dir.path()).unwrap(), vec![rec]);
    }

    #[test]
    fn truncated_tensor_is_an_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let params = PipelineParams::default();
        write_cache(dir.path(), &sample(), &params).unwrap();
        let data = dir.path().join("r1.f32le");
        let bytes = fs::read(&data).unwrap();
        fs::write(&data, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_cache(dir.path(), "r1", &params), Err(Error::Integrity(_))));
    }
}
