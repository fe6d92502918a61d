//! Manifest-level stages: scan, split, subset and augment.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lrtts_core::augment::{add_wgn, assemble, plan_augmentation, AugmentJob, AugmentSpec, Skipped};
use lrtts_core::corpus::{
    effective_lr_count, CorpusManifest, Finding, LrCount, ResourceClass, SpeakerId, UtteranceRecord,
};
use lrtts_core::segment::{build_subset, split_record, PauseParams, SubsetSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::formats::{alignment_file_name, load_alignment};
use crate::fsutil::{relative_to, write_atomic};
use crate::manifest::{rebase, resolve_audio, save_manifest, MANIFEST_FILE};
use crate::provenance::Provenance;
use crate::wav::{encode_wav, load_wav, wav_duration};

pub const AUDIO_DIR: &str = "audio";
pub const SKIP_REPORT_FILE: &str = "skipped.jsonl";

fn finding(id: impl Into<String>, message: impl Into<String>) -> Finding {
    Finding {
        record_id: id.into(),
        message: message.into(),
    }
}

fn read_tsv(path: &Path, min_fields: usize) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        if fields.len() < min_fields {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {min_fields} tab-separated fields"),
            });
        }
        rows.push(fields);
    }
    Ok(rows)
}

/// One mapping row: file stems starting with `prefix` belong to `speaker`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerRule {
    pub prefix: String,
    pub speaker: SpeakerId,
    pub class: ResourceClass,
}

/// `prefix<TAB>speaker<TAB>hr|lr` per line.
pub fn load_speaker_map(path: &Path) -> Result<Vec<SpeakerRule>> {
    read_tsv(path, 3)?
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let bad = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let class = match f[2].trim() {
                "hr" | "HR" => ResourceClass::HighResource,
                "lr" | "LR" => ResourceClass::LowResource,
                other => return Err(bad(format!("resource class `{other}`"))),
            };
            let speaker = SpeakerId::new(f[1].trim()).map_err(|e| bad(e.to_string()))?;
            Ok(SpeakerRule {
                prefix: f[0].clone(),
                speaker,
                class,
            })
        })
        .collect()
}

/// `id<TAB>text` per line.
pub fn load_transcripts(path: &Path) -> Result<BTreeMap<String, String>> {
    Ok(read_tsv(path, 2)?
        .into_iter()
        .map(|mut f| {
            let text = f.split_off(1).join("\t");
            (f.swap_remove(0), text)
        })
        .collect())
}

/// Builds a clean manifest from the `.wav` files directly under
/// `audio_root`. Audio paths are written relative to `manifest_dir`.
/// Files without a speaker rule or with unreadable audio become findings.
pub fn manifest_scan(
    audio_root: &Path,
    rules: &[SpeakerRule],
    transcripts: &BTreeMap<String, String>,
    manifest_dir: &Path,
) -> Result<(CorpusManifest, Vec<Finding>)> {
    let mut files: Vec<PathBuf> = fs::read_dir(audio_root)
        .map_err(io_err(audio_root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();

    let mut records = Vec::new();
    let mut findings = Vec::new();
    for path in files {
        let id = path
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let Some(rule) = rules
            .iter()
            .filter(|r| id.starts_with(&r.prefix))
            .max_by_key(|r| r.prefix.len())
        else {
            findings.push(finding(&id, "no speaker mapping"));
            continue;
        };
        let duration_s = match wav_duration(&path) {
            Ok(d) if d > 0.0 => d,
            Ok(_) => {
                findings.push(finding(&id, "empty audio"));
                continue;
            }
            Err(e) => {
                findings.push(finding(&id, e.to_string()));
                continue;
            }
        };
        records.push(UtteranceRecord::clean(
            id.clone(),
            relative_to(&path, manifest_dir),
            transcripts.get(&id).cloned().unwrap_or_default(),
            rule.speaker.clone(),
            rule.class,
            duration_s,
        ));
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("tool_version".into(), lrtts_core::TOOL_VERSION.into());
    metadata.insert("stage".into(), "manifest-scan".into());
    let manifest = CorpusManifest::new(metadata, records).map_err(|source| Error::Manifest {
        path: audio_root.to_path_buf(),
        source,
    })?;
    Ok((manifest, findings))
}

/// Splits every clean LR record at pauses, using `<id>.align` next to its
/// audio when present. Children are written under `out_root/audio`, the
/// manifest to `out_root/manifest.jsonl`. Records that cannot be split are
/// kept whole and reported.
pub fn split_corpus(
    manifest: &CorpusManifest,
    root: &Path,
    out_root: &Path,
    params: &PauseParams,
    provenance: &Provenance,
) -> Result<(CorpusManifest, Vec<Finding>)> {
    if let Some(r) = manifest.lr_records().find(|r| !r.is_lr_clean()) {
        return Err(Error::Invalid(format!(
            "`{}` is an augmented record; split before augmenting",
            r.id
        )));
    }
    params.validate()?;
    let audio_dir = out_root.join(AUDIO_DIR);

    enum Outcome {
        Keep,
        Failed(Finding),
        Split(Vec<UtteranceRecord>),
    }
    let outcomes: Vec<Outcome> = manifest
        .records
        .par_iter()
        .map(|r| -> Result<Outcome> {
            if !r.is_lr_clean() {
                return Ok(Outcome::Keep);
            }
            let audio = resolve_audio(root, r);
            let clip = match load_wav(&audio) {
                Ok(c) => c,
                Err(e) => return Ok(Outcome::Failed(finding(&r.id, e.to_string()))),
            };
            let align_path = crate::fsutil::parent_dir(&audio).join(alignment_file_name(&r.id));
            let alignment = if align_path.is_file() {
                Some(load_alignment(&align_path)?)
            } else {
                None
            };
            let pieces = match split_record(r, &clip, alignment.as_ref(), params) {
                Ok(p) => p,
                Err(e) => return Ok(Outcome::Failed(finding(&r.id, e.to_string()))),
            };
            let mut children = Vec::with_capacity(pieces.len());
            for mut p in pieces {
                let path = audio_dir.join(&p.record.audio_path);
                write_atomic(&path, &encode_wav(&p.clip).0)?;
                p.record.audio_path = format!("{AUDIO_DIR}/{}", p.record.audio_path);
                children.push(p.record);
            }
            Ok(Outcome::Split(children))
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut findings = Vec::new();
    for (r, outcome) in manifest.records.iter().zip(outcomes) {
        match outcome {
            Outcome::Split(children) => records.extend(children),
            Outcome::Keep | Outcome::Failed(_) => {
                if let Outcome::Failed(f) = outcome {
                    findings.push(f);
                }
                let mut kept = r.clone();
                rebase(std::slice::from_mut(&mut kept), root, out_root);
                records.push(kept);
            }
        }
    }
    let out =
        CorpusManifest::new(provenance.metadata("split", manifest), records).map_err(|source| {
            Error::Manifest {
                path: out_root.join(MANIFEST_FILE),
                source,
            }
        })?;
    save_manifest(&out, &out_root.join(MANIFEST_FILE))?;
    Ok((out, findings))
}

/// HR records plus the shortest-first subset of the clean LR records.
pub fn subset_corpus(
    manifest: &CorpusManifest,
    root: &Path,
    out_path: &Path,
    target_minutes: f64,
    provenance: &Provenance,
) -> Result<CorpusManifest> {
    if let Some(r) = manifest.lr_records().find(|r| !r.is_lr_clean()) {
        return Err(Error::Invalid(format!(
            "`{}` is an augmented record; subset before augmenting",
            r.id
        )));
    }
    let lr = CorpusManifest {
        metadata: BTreeMap::new(),
        records: manifest.lr_records().cloned().collect(),
    };
    let subset = build_subset(&lr, &SubsetSpec::minutes(target_minutes))?;
    let keep: std::collections::BTreeSet<&str> = subset
        .manifest
        .records
        .iter()
        .map(|r| r.id.as_str())
        .collect();
    let mut records: Vec<UtteranceRecord> = manifest
        .records
        .iter()
        .filter(|r| !r.is_lr() || keep.contains(r.id.as_str()))
        .cloned()
        .collect();
    rebase(&mut records, root, crate::fsutil::parent_dir(out_path));
    let mut metadata = provenance.metadata("subset", manifest);
    metadata.insert(
        "subset_target_s".into(),
        format!("{}", target_minutes * 60.0),
    );
    metadata.insert("subset_total_s".into(), format!("{}", subset.total_s));
    let out = CorpusManifest { metadata, records };
    save_manifest(&out, out_path)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub manifest: CorpusManifest,
    pub skipped: Vec<Skipped>,
    /// Noisy samples that left [-1, 1] and were clipped.
    pub clipped_samples: usize,
    pub effective: LrCount,
}

/// Renders `spec.n_copies` noisy copies of every clean LR record into
/// `out_root/audio` and writes the combined manifest and skip report to
/// `out_root`. Original audio is referenced, not copied.
pub fn augment_corpus(
    manifest: &CorpusManifest,
    spec: &AugmentSpec,
    root: &Path,
    out_root: &Path,
    lr_weight: u32,
    provenance: &Provenance,
) -> Result<AugmentOutcome> {
    spec.validate()?;
    let audio_dir = out_root.join(AUDIO_DIR);
    let mut jobs = plan_augmentation(manifest, spec);
    for j in &mut jobs {
        j.record.audio_path = format!("{AUDIO_DIR}/{}", j.record.audio_path);
    }
    let mut by_source: BTreeMap<usize, Vec<&AugmentJob>> = BTreeMap::new();
    for j in &jobs {
        by_source.entry(j.source).or_default().push(j);
    }
    let groups: Vec<(usize, Vec<&AugmentJob>)> = by_source.into_iter().collect();

    // Each record's copies depend only on its own seeds, so the parallel
    // order cannot change any output byte.
    let rendered: Vec<Result<usize, Skipped>> = groups
        .par_iter()
        .map(|(source, copies)| -> Result<Result<usize, Skipped>> {
            let origin = &manifest.records[*source];
            let skip = |reason: String| Skipped {
                id: origin.id.clone(),
                reason,
            };
            let clip = match load_wav(&resolve_audio(root, origin)) {
                Ok(c) => c,
                Err(e) => return Ok(Err(skip(e.to_string()))),
            };
            let mut clipped = 0;
            let mut files = Vec::with_capacity(copies.len());
            for job in copies {
                match add_wgn(&clip, spec.snr_db, job.seed) {
                    Ok(noisy) => {
                        clipped += noisy.clipped;
                        files.push((
                            out_root.join(&job.record.audio_path),
                            encode_wav(&noisy.clip).0,
                        ));
                    }
                    Err(e) => return Ok(Err(skip(e.to_string()))),
                }
            }
            for (path, bytes) in files {
                write_atomic(&path, &bytes)?;
            }
            Ok(Ok(clipped))
        })
        .collect::<Result<_>>()?;

    let mut skipped = Vec::new();
    let mut clipped_samples = 0;
    for r in rendered {
        match r {
            Ok(c) => clipped_samples += c,
            Err(s) => skipped.push(s),
        }
    }
    if jobs.is_empty() {
        fs::create_dir_all(&audio_dir).map_err(io_err(&audio_dir))?;
    }

    let mut out = assemble(manifest, jobs, &skipped);
    for r in out.records.iter_mut().filter(|r| r.aug_index == 0) {
        rebase(std::slice::from_mut(r), root, out_root);
    }
    let effective = effective_lr_count(&out, lr_weight);
    let mut metadata = provenance.metadata("augment", manifest);
    metadata.insert("augment_copies".into(), spec.n_copies.to_string());
    metadata.insert("augment_snr_db".into(), format!("{}", spec.snr_db));
    metadata.insert("augment_seed".into(), spec.base_seed.to_string());
    metadata.insert(
        "noise_generator".into(),
        "chacha8 keyed by sha256(base_seed, record id, copy); box-muller normals; rescaled to exact target power".into(),
    );
    metadata.insert("effective_lr_count".into(), effective.count.to_string());
    metadata.insert("lr_weight".into(), lr_weight.to_string());
    out.metadata = metadata;

    save_manifest(&out, &out_root.join(MANIFEST_FILE))?;
    write_atomic(
        &out_root.join(SKIP_REPORT_FILE),
        skip_report(&skipped).as_bytes(),
    )?;
    Ok(AugmentOutcome {
        manifest: out,
        skipped,
        clipped_samples,
        effective,
    })
}

#[derive(Serialize, Deserialize)]
struct SkipLine<'a> {
    id: &'a str,
    reason: &'a str,
}

pub fn skip_report(skipped: &[Skipped]) -> String {
    skipped
        .iter()
        .map(|s| {
            serde_json::to_string(&SkipLine {
                id: &s.id,
                reason: &s.reason,
            })
            .expect("serializes")
                + "\n"
        })
        .collect()
}
