//! Alignment files, the binary matrix container and plan files.

use std::path::Path;

use lrtts_core::dsp::FrameMatrix;
use lrtts_core::sampler::{Batch, BatchPlan, BinLabel, SamplerConfig};
use lrtts_core::segment::{AlignedWord, WordAlignment};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::fsutil::write_atomic;

fn parse_err(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

/// `<record-id>.align`, with path separators in the id replaced.
pub fn alignment_file_name(id: &str) -> String {
    let stem = lrtts_core::augment::audio_file_name(id);
    format!("{}.align", stem.trim_end_matches(".wav"))
}

pub fn load_alignment(path: &Path) -> Result<WordAlignment> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let words = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str::<AlignedWord>(l).map_err(|e| parse_err(path, i + 1, e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(WordAlignment { words })
}

pub fn alignment_to_string(alignment: &WordAlignment) -> String {
    alignment
        .words
        .iter()
        .map(|w| serde_json::to_string(w).expect("word serializes") + "\n")
        .collect()
}

pub const MATRIX_MAGIC: [u8; 4] = *b"LRTM";
const HEADER_LEN: usize = 16;

/// Header: magic, n_frames (u32), n_cols (u32), element size in bytes
/// (u32, 4 or 8), all little-endian. Data follows row-major.
pub fn encode_matrix(m: &FrameMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_flat().len());
    out.extend_from_slice(&MATRIX_MAGIC);
    for v in [m.n_rows() as u32, m.n_cols() as u32, 8] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in m.as_flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode_binary(bytes: &[u8], path: &Path) -> Result<FrameMatrix> {
    let bad = |msg: &str| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        details: msg.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (rows, cols, size) = (word(1), word(2), word(3));
    let body = &bytes[HEADER_LEN..];
    if !matches!(size, 4 | 8) {
        return Err(bad("element size must be 4 or 8"));
    }
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(size)) != Some(body.len()) {
        return Err(bad("payload length does not match header"));
    }
    let data: Vec<f64> = if size == 8 {
        body.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    } else {
        body.chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect()
    };
    Ok(FrameMatrix::from_flat(cols, data))
}

/// Whitespace-separated numbers, one row per line.
fn decode_text(text: &str, path: &Path) -> Result<FrameMatrix> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| parse_err(path, i + 1, e)))
            .collect::<Result<Vec<_>>>()?;
        if rows
            .first()
            .is_some_and(|r: &Vec<f64>| r.len() != row.len())
        {
            return Err(parse_err(path, i + 1, "ragged row"));
        }
        rows.push(row);
    }
    Ok(FrameMatrix::from_rows(&rows))
}

pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<FrameMatrix> {
    if bytes.starts_with(&MATRIX_MAGIC) {
        return decode_binary(bytes, path);
    }
    let text = std::str::from_utf8(bytes).map_err(|_| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        details: "neither binary matrix nor text".into(),
    })?;
    decode_text(text, path)
}

pub fn load_matrix(path: &Path) -> Result<FrameMatrix> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_matrix(&bytes, path)
}

pub fn save_matrix(m: &FrameMatrix, path: &Path) -> Result<()> {
    write_atomic(path, &encode_matrix(m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanHeader {
    config: SamplerConfig,
    fingerprint: String,
    tool_version: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanLine {
    bin: BinLabel,
    ids: Vec<String>,
}

pub fn plan_to_string(plan: &BatchPlan) -> String {
    let header = PlanHeader {
        config: plan.config.clone(),
        fingerprint: plan.fingerprint.clone(),
        tool_version: lrtts_core::TOOL_VERSION.to_string(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for b in &plan.batches {
        let line = PlanLine {
            bin: b.bin,
            ids: b.record_ids.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("batch serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_plan(text: &str, path: &Path) -> Result<BatchPlan> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let header: PlanHeader = match lines.next() {
        Some((i, l)) => serde_json::from_str(l).map_err(|e| parse_err(path, i + 1, e))?,
        None => return Err(parse_err(path, 1, "missing plan header")),
    };
    let batches = lines
        .map(|(i, l)| {
            serde_json::from_str::<PlanLine>(l)
                .map(|p| Batch {
                    bin: p.bin,
                    record_ids: p.ids,
                })
                .map_err(|e| parse_err(path, i + 1, e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchPlan {
        config: header.config,
        fingerprint: header.fingerprint,
        batches,
    })
}

pub fn load_plan(path: &Path) -> Result<BatchPlan> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_plan(&text, path)
}

pub fn save_plan(plan: &BatchPlan, path: &Path) -> Result<()> {
    write_atomic(path, plan_to_string(plan).as_bytes())
}
