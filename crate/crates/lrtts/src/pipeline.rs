//! subset → augment → plan → train-demo under one config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lrtts_core::corpus::LrCount;
use lrtts_core::sampler::plan_batches;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::corpus_ops::{augment_corpus, subset_corpus, AugmentOutcome, SKIP_REPORT_FILE};
use crate::error::{Error, Result};
use crate::formats::save_plan;
use crate::fsutil::file_sha256;
use crate::manifest::{audio_root, load_manifest, MANIFEST_FILE};
use crate::provenance::{manifest_fingerprint, Provenance};
use crate::train_ops::{compute_targets, save_report, train_demo, TrainReport};

pub const SUBSET_DIR: &str = "subset";
pub const AUGMENTED_DIR: &str = "augmented";
pub const PLAN_FILE: &str = "plan.jsonl";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, Serialize)]
struct RunRecord<'a> {
    tool_version: &'a str,
    config_hash: &'a str,
    config: &'a str,
    input_fingerprint: String,
    effective_lr_count: u64,
    below_stability_threshold: bool,
    skipped: usize,
    clipped_samples: usize,
    /// Output path (relative to the run root) to SHA-256.
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub out_root: PathBuf,
    pub augment: AugmentOutcome,
    pub effective: LrCount,
    pub report: TrainReport,
}

pub fn run_pipeline(config: &PipelineConfig, out_root: Option<&Path>) -> Result<PipelineOutcome> {
    config.validate()?;
    let manifest_path = config
        .input
        .manifest
        .as_deref()
        .ok_or_else(|| Error::Config("input.manifest is required".into()))?;
    let out_root = out_root
        .map(Path::to_path_buf)
        .or_else(|| config.input.out_root.clone())
        .ok_or_else(|| {
            Error::Config("no output root: pass --out-root or set input.out_root".into())
        })?;
    let provenance = Provenance::new(config);

    let input = load_manifest(manifest_path)?;
    let mut root = audio_root(manifest_path, config.input.audio_root.as_deref());
    let mut current = input.clone();
    if let Some(subset) = &config.subset {
        let dir = out_root.join(SUBSET_DIR);
        current = subset_corpus(
            &current,
            &root,
            &dir.join(MANIFEST_FILE),
            subset.target_minutes,
            &provenance,
        )?;
        root = dir;
    }

    let weight = if config.sampler.mode.is_weighted() {
        config.sampler.lr_weight
    } else {
        1
    };
    let aug_dir = out_root.join(AUGMENTED_DIR);
    let augment = augment_corpus(
        &current,
        &config.augment,
        &root,
        &aug_dir,
        weight,
        &provenance,
    )?;
    let augmented = &augment.manifest;

    let plan = plan_batches(augmented, &config.sampler)?;
    save_plan(&plan, &out_root.join(PLAN_FILE))?;

    let targets = compute_targets(augmented, &aug_dir, &config.features, config.eval.order)?;
    let report = train_demo(
        augmented,
        &plan,
        &targets,
        &config.train,
        &provenance.config_hash,
    )?;
    save_report(&report, &out_root.join(TRAIN_REPORT_FILE))?;

    let mut outputs = BTreeMap::new();
    let mut files = vec![
        format!("{AUGMENTED_DIR}/{MANIFEST_FILE}"),
        format!("{AUGMENTED_DIR}/{SKIP_REPORT_FILE}"),
        PLAN_FILE.to_string(),
        TRAIN_REPORT_FILE.to_string(),
    ];
    if config.subset.is_some() {
        files.push(format!("{SUBSET_DIR}/{MANIFEST_FILE}"));
    }
    for r in augmented.records.iter().filter(|r| r.aug_index > 0) {
        files.push(format!("{AUGMENTED_DIR}/{}", r.audio_path));
    }
    for f in files {
        let hash = file_sha256(&out_root.join(&f))?;
        outputs.insert(f, hash);
    }
    let run = RunRecord {
        tool_version: lrtts_core::TOOL_VERSION,
        config_hash: &provenance.config_hash,
        config: &provenance.config_toml,
        input_fingerprint: manifest_fingerprint(&input),
        effective_lr_count: augment.effective.count,
        below_stability_threshold: augment.effective.below_threshold,
        skipped: augment.skipped.len(),
        clipped_samples: augment.clipped_samples,
        outputs,
    };
    save_report(&run, &out_root.join(RUN_FILE))?;

    Ok(PipelineOutcome {
        out_root,
        effective: augment.effective,
        augment,
        report,
    })
}
