//! Checkpoint container.
//!
//! Layout: the 8-byte tag `STDACKPT`, a little-endian `u32` format version, a
//! little-endian `u64` header length, the UTF-8 JSON header, then every tensor
//! as little-endian `f32` in header order. The header carries the model
//! configuration, caller metadata (seeds, lambda, ...) and a tensor index.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelState};
use crate::error::{Error, Result};
use crate::nn::Module;

pub const MAGIC: &[u8; 8] = b"STDACKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    lambda: f64,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Serializes a model; `meta` is stored verbatim in the header.
pub fn to_bytes(model: &ModelState, meta: serde_json::Value) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    let mut offset = 0;
    model.visit(&mut |p| {
        tensors.push(TensorEntry { name: p.name.clone(), shape: p.shape.clone(), offset, len: p.len() });
        offset += p.len();
        for v in &p.value {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    });
    let header = Header {
        format: "stda-checkpoint".into(),
        version: FORMAT_VERSION,
        config: model.config().clone(),
        lambda: model.lambda(),
        meta,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(ModelState, serde_json::Value)> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::parse("magic", "not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::parse("version", format!("unsupported checkpoint version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..20 + header_len).ok_or_else(|| Error::parse("header", "truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    let data = &bytes[20 + header_len..];

    let mut model = ModelState::new(&header.config, 0)?;
    model.set_lambda(header.lambda)?;
    let index: HashMap<&str, &TensorEntry> = header.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    let mut problem: Option<Error> = None;
    let mut seen = 0;
    model.visit_mut(&mut |p| {
        if problem.is_some() {
            return;
        }
        let Some(entry) = index.get(p.name.as_str()) else {
            problem = Some(Error::Integrity(format!("checkpoint lacks tensor {}", p.name)));
            return;
        };
        if entry.shape != p.shape || entry.len != p.len() {
            problem = Some(Error::Integrity(format!(
                "tensor {} has shape {:?}, expected {:?}",
                p.name, entry.shape, p.shape
            )));
            return;
        }
        let Some(raw) = data.get(entry.offset * 4..(entry.offset + entry.len) * 4) else {
            problem = Some(Error::Integrity(format!("tensor {} is truncated", p.name)));
            return;
        };
        for (v, chunk) in p.value.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        seen += 1;
    });
    if let Some(e) = problem {
        return Err(e);
    }
    if seen != header.tensors.len() {
        return Err(Error::Integrity(format!(
            "checkpoint holds {} tensors, model expects {seen}",
            header.tensors.len()
        )));
    }
    Ok((model, header.meta))
}

pub fn save(path: &Path, model: &ModelState, meta: serde_json::Value) -> Result<()> {
    let bytes = to_bytes(model, meta)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(ModelState, serde_json::Value)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
