//! On-disk raw recordings: a JSON header next to a little-endian `f32`
//! sample file, channel-major.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RawRecording, Segment};
use crate::error::{Error, Result};
use crate::table::Condition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingHeader {
    pub channels: Vec<String>,
    pub rate_hz: f64,
    pub segments: Vec<Segment>,
    pub subject: u32,
    pub condition: Option<Condition>,
    pub n_samples: usize,
    /// Sample file name, relative to the header's directory.
    pub samples_file: String,
}

/// Writes `<stem>.json` and `<stem>.f32` into `dir`; returns the header path.
pub fn write_recording(dir: &Path, stem: &str, rec: &RawRecording) -> Result<PathBuf> {
    rec.validate()?;
    let samples_file = format!("{stem}.f32");
    let header = RecordingHeader {
        channels: rec.channels.clone(),
        rate_hz: rec.rate_hz,
        segments: rec.segments.clone(),
        subject: rec.subject_id,
        condition: rec.condition,
        n_samples: rec.n_samples(),
        samples_file: samples_file.clone(),
    };
    let mut bytes = Vec::with_capacity(4 * rec.n_samples() * rec.channels.len());
    for ch in &rec.samples {
        for &v in ch {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(dir.join(&samples_file), bytes)?;
    let header_path = dir.join(format!("{stem}.json"));
    fs::write(&header_path, serde_json::to_string_pretty(&header)? + "\n")?;
    Ok(header_path)
}

pub fn read_recording(header_path: &Path) -> Result<RawRecording> {
    let header: RecordingHeader = serde_json::from_slice(&fs::read(header_path)?)?;
    let dir = header_path.parent().unwrap_or(Path::new("."));
    let bytes = fs::read(dir.join(&header.samples_file))?;
    let expected = 4 * header.n_samples * header.channels.len();
    if bytes.len() != expected {
        return Err(Error::Parse(format!(
            "{}: expected {expected} bytes of samples, found {}",
            header.samples_file,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let samples = if header.n_samples == 0 {
        vec![Vec::new(); header.channels.len()]
    } else {
        values.chunks(header.n_samples).map(<[f64]>::to_vec).collect()
    };
    let rec = RawRecording {
        channels: header.channels,
        rate_hz: header.rate_hz,
        samples,
        segments: header.segments,
        subject_id: header.subject,
        condition: header.condition,
    };
    rec.validate()?;
    Ok(rec)
}

/// Every recording header in `dir` (a `*.json` with a `*.f32` beside it), in
/// file-name order.
pub fn list_recordings(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json") && p.with_extension("f32").is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Empty(format!(
            "no recording headers in {}",
            dir.display()
        )));
    }
    Ok(paths)
}
