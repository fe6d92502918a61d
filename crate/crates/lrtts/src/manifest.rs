//! JSON-lines manifest files: one metadata object, then one record per line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lrtts_core::corpus::{AudioStatus, CorpusManifest, UtteranceRecord, ValidationReport};

use crate::error::{io_err, Error, Result};
use crate::fsutil::{parent_dir, relative_to, write_atomic};
use crate::wav::wav_duration;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

pub fn manifest_to_string(manifest: &CorpusManifest) -> String {
    let mut out = serde_json::to_string(&manifest.metadata).expect("string map serializes");
    out.push('\n');
    for r in &manifest.records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<CorpusManifest> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let metadata: BTreeMap<String, String> = match lines.next() {
        Some((i, l)) => {
            serde_json::from_str(l).map_err(|e| parse_err(i + 1, format!("metadata: {e}")))?
        }
        None => return Err(parse_err(1, "missing metadata line".into())),
    };
    let records = lines
        .map(|(i, l)| {
            serde_json::from_str::<UtteranceRecord>(l).map_err(|e| parse_err(i + 1, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    CorpusManifest::new(metadata, records).map_err(|source| Error::Manifest {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_manifest(&text, path)
}

pub fn save_manifest(manifest: &CorpusManifest, path: &Path) -> Result<()> {
    write_atomic(path, manifest_to_string(manifest).as_bytes())
}

/// Audio paths in a manifest are relative to its directory unless an
/// explicit root is given.
pub fn audio_root(manifest_path: &Path, explicit: Option<&Path>) -> PathBuf {
    explicit.map_or_else(
        || parent_dir(manifest_path).to_path_buf(),
        Path::to_path_buf,
    )
}

pub fn resolve_audio(root: &Path, record: &UtteranceRecord) -> PathBuf {
    root.join(&record.audio_path)
}

/// Rewrites audio paths resolved against `from_root` so they resolve
/// against `to_dir` instead.
pub fn rebase(records: &mut [UtteranceRecord], from_root: &Path, to_dir: &Path) {
    for r in records {
        r.audio_path = relative_to(&from_root.join(&r.audio_path), to_dir);
    }
}

/// Validation with every audio file checked for presence and duration.
pub fn validate_with_audio(manifest: &CorpusManifest, root: &Path) -> ValidationReport {
    manifest.validate(|audio_path| {
        let path = root.join(audio_path);
        if !path.is_file() {
            return AudioStatus::Missing;
        }
        match wav_duration(&path) {
            Ok(d) => AudioStatus::Present {
                duration_s: Some(d),
            },
            Err(e) => AudioStatus::Unreadable(e.to_string()),
        }
    })
}
