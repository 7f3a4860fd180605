//! Recording bundle: a directory holding `signal.f32le`, `meta.json` and
//! `stages.csv`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Recording, StageLabel};
use crate::error::{Error, Result};

pub const SIGNAL_FILE: &str = "signal.f32le";
pub const META_FILE: &str = "meta.json";
pub const STAGES_FILE: &str = "stages.csv";
const STAGES_HEADER: &str = "epoch_index,stage";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleMeta {
    pub subject_id: String,
    pub recording_id: String,
    pub channel: String,
    pub sampling_rate_hz: f64,
    pub n_samples: usize,
}

pub fn read_bundle(dir: &Path) -> Result<Recording> {
    let meta_path = dir.join(META_FILE);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: BundleMeta = serde_json::from_str(&meta_text)?;

    let signal_path = dir.join(SIGNAL_FILE);
    let raw = fs::read(&signal_path).map_err(|e| Error::io(&signal_path, e))?;
    if raw.len() != meta.n_samples * 4 {
        return Err(Error::Integrity(format!(
            "{}: meta declares {} samples ({} bytes) but signal file has {} bytes",
            dir.display(),
            meta.n_samples,
            meta.n_samples * 4,
            raw.len()
        )));
    }
    let samples = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();

    let stages_path = dir.join(STAGES_FILE);
    let text = fs::read_to_string(&stages_path).map_err(|e| Error::io(&stages_path, e))?;
    let stages = parse_stage_table(&text)?;

    let rec = Recording {
        subject_id: meta.subject_id,
        recording_id: meta.recording_id,
        channel: meta.channel,
        sampling_rate_hz: meta.sampling_rate_hz,
        samples,
        stages,
    };
    rec.validate()?;
    Ok(rec)
}

/// Parses `epoch_index,stage` rows; indices must run 0, 1, 2, ... Row numbers
/// in errors are 1-based file lines.
pub fn parse_stage_table(text: &str) -> Result<Vec<StageLabel>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == STAGES_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Format {
                row: 1,
                message: format!("expected header `{STAGES_HEADER}`, found `{}`", h.trim()),
            })
        }
        None => return Err(Error::Format { row: 1, message: "empty stage table".into() }),
    }
    let mut stages = Vec::new();
    for (i, line) in lines {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (idx, token) = line
            .split_once(',')
            .ok_or_else(|| Error::Format { row, message: format!("expected two columns, found `{line}`") })?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| Error::Format { row, message: format!("bad epoch index `{}`", idx.trim()) })?;
        if idx != stages.len() {
            return Err(Error::Format {
                row,
                message: format!("epoch index {idx} out of sequence, expected {}", stages.len()),
            });
        }
        let stage: StageLabel = token
            .parse()
            .map_err(|_| Error::Format { row, message: format!("unknown stage token `{}`", token.trim()) })?;
        stages.push(stage);
    }
    Ok(stages)
}

pub fn write_bundle(dir: &Path, rec: &Recording) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = BundleMeta {
        subject_id: rec.subject_id.clone(),
        recording_id: rec.recording_id.clone(),
        channel: rec.channel.clone(),
        sampling_rate_hz: rec.sampling_rate_hz,
        n_samples: rec.samples.len(),
    };
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))?;

    let mut raw = Vec::with_capacity(rec.samples.len() * 4);
    for v in &rec.samples {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    let signal_path = dir.join(SIGNAL_FILE);
    fs::write(&signal_path, raw).map_err(|e| Error::io(&signal_path, e))?;

    let mut csv = String::from(STAGES_HEADER);
    csv.push('\n');
    for (i, s) in rec.stages.iter().enumerate() {
        csv.push_str(&format!("{i},{s}\n"));
    }
    let stages_path = dir.join(STAGES_FILE);
    fs::write(&stages_path, csv).map_err(|e| Error::io(&stages_path, e))
}
