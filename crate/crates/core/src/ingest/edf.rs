//! European Data Format reader and writer.
//!
//! Only plain EDF is handled: a 256-byte ASCII header, `ns` 256-byte signal
//! headers stored field-major, then data records of little-endian `i16`
//! samples. Physical values follow the header's linear map between the
//! digital and physical ranges.

use std::fs;
use std::path::Path;

use super::Recording;
use crate::error::{Error, Result};

const FIXED_HEADER: usize = 256;
const SIGNAL_HEADER: usize = 256;

/// Widths of the per-signal header fields, in storage order.
const SIGNAL_FIELDS: [(&str, usize); 10] = [
    ("label", 16),
    ("transducer", 80),
    ("physical_dimension", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefiltering", 80),
    ("samples_per_record", 8),
    ("reserved", 32),
];

/// One signal to be written with [`write_edf`].
#[derive(Debug, Clone)]
pub struct EdfSignal {
    pub label: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub samples_per_record: usize,
    /// Physical values; length must be a multiple of `samples_per_record`
    /// matching the record count of every other signal.
    pub samples: Vec<f32>,
}

impl EdfSignal {
    fn gain(&self) -> f64 {
        (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min) as f64
    }
}

#[derive(Debug, Clone)]
struct SignalHeader {
    label: String,
    physical_min: f64,
    physical_max: f64,
    digital_min: i32,
    digital_max: i32,
    samples_per_record: usize,
}

fn ascii_field(bytes: &[u8], field: &str) -> Result<String> {
    std::str::from_utf8(bytes).map(|s| s.trim().to_string()).map_err(|_| Error::parse(field, "field is not ASCII"))
}

fn number_field<T: std::str::FromStr>(bytes: &[u8], field: &str) -> Result<T> {
    let text = ascii_field(bytes, field)?;
    text.parse().map_err(|_| Error::parse(field, format!("`{text}` is not a number")))
}

/// Reads the samples of `channel` from an EDF file. The returned recording
/// takes its subject from the patient field, its id from the recording field
/// and carries no stage labels.
pub fn parse_edf(path: &Path, channel: &str) -> Result<Recording> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_edf_bytes(&bytes, channel)
}

pub fn parse_edf_bytes(bytes: &[u8], channel: &str) -> Result<Recording> {
    if bytes.len() < FIXED_HEADER {
        return Err(Error::parse("header", format!("file is {} bytes, shorter than the fixed header", bytes.len())));
    }
    let version = ascii_field(&bytes[0..8], "version")?;
    if version != "0" {
        return Err(Error::parse("version", format!("expected `0`, found `{version}`")));
    }
    let patient = ascii_field(&bytes[8..88], "patient")?;
    let recording = ascii_field(&bytes[88..168], "recording")?;
    let header_bytes: usize = number_field(&bytes[184..192], "header_bytes")?;
    let n_records: i64 = number_field(&bytes[236..244], "n_records")?;
    let record_duration: f64 = number_field(&bytes[244..252], "record_duration")?;
    let n_signals: usize = number_field(&bytes[252..256], "n_signals")?;

    if n_signals == 0 {
        return Err(Error::parse("n_signals", "file declares no signals"));
    }
    let expected_header = FIXED_HEADER + n_signals * SIGNAL_HEADER;
    if header_bytes != expected_header {
        return Err(Error::parse(
            "header_bytes",
            format!("declared {header_bytes}, but {n_signals} signals need {expected_header}"),
        ));
    }
    if bytes.len() < expected_header {
        return Err(Error::parse("header_bytes", "file truncated inside signal headers"));
    }
    if !(record_duration > 0.0) {
        return Err(Error::parse("record_duration", format!("{record_duration} is not positive")));
    }

    // Signal headers are stored field by field across all signals.
    let mut columns: Vec<Vec<&[u8]>> = Vec::with_capacity(SIGNAL_FIELDS.len());
    let mut offset = FIXED_HEADER;
    for (_, width) in SIGNAL_FIELDS {
        let col = (0..n_signals).map(|i| &bytes[offset + i * width..offset + (i + 1) * width]).collect();
        columns.push(col);
        offset += n_signals * width;
    }
    let mut signals = Vec::with_capacity(n_signals);
    for i in 0..n_signals {
        let sig = SignalHeader {
            label: ascii_field(columns[0][i], "label")?,
            physical_min: number_field(columns[3][i], "physical_min")?,
            physical_max: number_field(columns[4][i], "physical_max")?,
            digital_min: number_field(columns[5][i], "digital_min")?,
            digital_max: number_field(columns[6][i], "digital_max")?,
            samples_per_record: number_field(columns[8][i], "samples_per_record")?,
        };
        if sig.digital_max <= sig.digital_min {
            return Err(Error::parse("digital_max", format!("signal `{}` has an empty digital range", sig.label)));
        }
        if sig.physical_max == sig.physical_min {
            return Err(Error::parse("physical_max", format!("signal `{}` has an empty physical range", sig.label)));
        }
        signals.push(sig);
    }

    let record_samples: usize = signals.iter().map(|s| s.samples_per_record).sum();
    let record_bytes = record_samples * 2;
    let data = &bytes[expected_header..];
    if record_bytes == 0 {
        return Err(Error::parse("samples_per_record", "records hold no samples"));
    }
    let n_records = if n_records < 0 {
        if data.len() % record_bytes != 0 {
            return Err(Error::parse("n_records", "unknown record count and data is not a whole number of records"));
        }
        data.len() / record_bytes
    } else {
        let n = n_records as usize;
        if data.len() != n * record_bytes {
            return Err(Error::parse(
                "n_records",
                format!("{n} records need {} data bytes, file has {}", n * record_bytes, data.len()),
            ));
        }
        n
    };

    let Some(target) = signals.iter().position(|s| s.label == channel) else {
        return Err(Error::ChannelNotFound {
            requested: channel.to_string(),
            available: signals.iter().map(|s| s.label.clone()).collect(),
        });
    };
    let sig = &signals[target];
    let lead: usize = signals[..target].iter().map(|s| s.samples_per_record).sum();
    let gain = (sig.physical_max - sig.physical_min) / (sig.digital_max - sig.digital_min) as f64;
    let mut samples = Vec::with_capacity(n_records * sig.samples_per_record);
    for r in 0..n_records {
        let start = r * record_bytes + lead * 2;
        for chunk in data[start..start + sig.samples_per_record * 2].chunks_exact(2) {
            let d = i16::from_le_bytes([chunk[0], chunk[1]]) as f64;
            samples.push((sig.physical_min + (d - sig.digital_min as f64) * gain) as f32);
        }
    }

    Ok(Recording {
        subject_id: patient,
        recording_id: recording,
        channel: sig.label.clone(),
        sampling_rate_hz: sig.samples_per_record as f64 / record_duration,
        samples,
        stages: Vec::new(),
    })
}

fn put(out: &mut Vec<u8>, text: &str, width: usize) {
    let mut field: Vec<u8> = text.bytes().take(width).collect();
    field.resize(width, b' ');
    out.extend_from_slice(&field);
}

fn fmt_number(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 8 {
        s
    } else {
        format!("{v:.3}").chars().take(8).collect()
    }
}

/// Writes signals as an EDF file with `record_duration` seconds per record.
pub fn write_edf(
    path: &Path,
    patient: &str,
    recording: &str,
    record_duration: f64,
    signals: &[EdfSignal],
) -> Result<()> {
    let bytes = edf_bytes(patient, recording, record_duration, signals)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn edf_bytes(patient: &str, recording: &str, record_duration: f64, signals: &[EdfSignal]) -> Result<Vec<u8>> {
    if signals.is_empty() {
        return Err(Error::Config("EDF needs at least one signal".into()));
    }
    let n_records = signals[0].samples.len() / signals[0].samples_per_record.max(1);
    for s in signals {
        if s.samples_per_record == 0 || s.samples.len() != n_records * s.samples_per_record {
            return Err(Error::Config(format!("signal `{}` does not fill {n_records} whole records", s.label)));
        }
        if s.digital_max <= s.digital_min || s.digital_min < i16::MIN as i32 || s.digital_max > i16::MAX as i32 {
            return Err(Error::Config(format!("signal `{}` has an invalid digital range", s.label)));
        }
    }
    let ns = signals.len();
    let mut out = Vec::new();
    put(&mut out, "0", 8);
    put(&mut out, patient, 80);
    put(&mut out, recording, 80);
    put(&mut out, "01.01.00", 8);
    put(&mut out, "00.00.00", 8);
    put(&mut out, &(FIXED_HEADER + ns * SIGNAL_HEADER).to_string(), 8);
    put(&mut out, "", 44);
    put(&mut out, &n_records.to_string(), 8);
    put(&mut out, &fmt_number(record_duration), 8);
    put(&mut out, &ns.to_string(), 4);
    for s in signals {
        put(&mut out, &s.label, 16);
    }
    for _ in signals {
        put(&mut out, "", 80);
    }
    for s in signals {
        put(&mut out, &s.physical_dimension, 8);
    }
    for s in signals {
        put(&mut out, &fmt_number(s.physical_min), 8);
    }
    for s in signals {
        put(&mut out, &fmt_number(s.physical_max), 8);
    }
    for s in signals {
        put(&mut out, &s.digital_min.to_string(), 8);
    }
    for s in signals {
        put(&mut out, &s.digital_max.to_string(), 8);
    }
    for _ in signals {
        put(&mut out, "", 80);
    }
    for s in signals {
        put(&mut out, &s.samples_per_record.to_string(), 8);
    }
    for _ in signals {
        put(&mut out, "", 32);
    }
    for r in 0..n_records {
        for s in signals {
            let gain = s.gain();
            for &p in &s.samples[r * s.samples_per_record..(r + 1) * s.samples_per_record] {
                let d = ((p as f64 - s.physical_min) / gain + s.digital_min as f64).round();
                let d = d.clamp(s.digital_min as f64, s.digital_max as f64) as i16;
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
    }
    Ok(out)
}
