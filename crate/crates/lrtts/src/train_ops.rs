//! `train-demo`: cepstral-mean targets, SGD over a plan, loss report.

use std::collections::BTreeMap;
use std::path::Path;

use lrtts_core::corpus::CorpusManifest;
use lrtts_core::metrics::cepstra;
use lrtts_core::sampler::{verify_plan, BatchPlan, SamplerConfig};
use lrtts_core::trainer::{train, TrainSettings};
use lrtts_core::FeatureParams;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::manifest::resolve_audio;
use crate::provenance::manifest_fingerprint;
use crate::wav::load_wav;

/// Time-mean mel cepstrum (`c_0..c_order`) of every record's audio,
/// standardized per coefficient across the manifest. Raw `c_0` sits in the
/// hundreds, which would make any fixed learning rate corpus-dependent.
pub fn compute_targets(
    manifest: &CorpusManifest,
    root: &Path,
    params: &FeatureParams,
    order: usize,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut targets: BTreeMap<String, Vec<f64>> = manifest
        .records
        .par_iter()
        .map(|r| {
            let clip = load_wav(&resolve_audio(root, r))?;
            let c = cepstra(&clip, params, order)?;
            Ok((r.id.clone(), c.frames.column_means()))
        })
        .collect::<Result<_>>()?;
    standardize(&mut targets);
    Ok(targets)
}

/// Zero mean and unit variance per dimension; constant dimensions are
/// only centred.
pub fn standardize(targets: &mut BTreeMap<String, Vec<f64>>) {
    let n = targets.len() as f64;
    let Some(dim) = targets.values().next().map(Vec::len) else {
        return;
    };
    for d in 0..dim {
        let mean = targets.values().map(|t| t[d]).sum::<f64>() / n;
        let var = targets.values().map(|t| (t[d] - mean).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        for t in targets.values_mut() {
            t[d] = (t[d] - mean) / scale;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerLoss {
    pub speaker: String,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub tool_version: String,
    pub config_hash: String,
    pub manifest_fingerprint: String,
    pub plan_fingerprint: String,
    pub sampler: SamplerConfig,
    pub settings: TrainSettings,
    pub steps: u64,
    pub final_loss: f64,
    pub lr_step_fraction: f64,
    pub pure_lr_batch_fraction: f64,
    pub speakers: Vec<SpeakerLoss>,
}

impl TrainReport {
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>14} {:>14}\n",
            "speaker", "initial loss", "final loss"
        );
        for s in &self.speakers {
            out.push_str(&format!(
                "{:<16} {:>14.6} {:>14.6}\n",
                s.speaker, s.initial_loss, s.final_loss
            ));
        }
        out.push_str(&format!(
            "steps {}  LR-gradient steps {:.4}  pure-LR batches {:.4}\n",
            self.steps, self.lr_step_fraction, self.pure_lr_batch_fraction
        ));
        out
    }
}

pub fn train_demo(
    manifest: &CorpusManifest,
    plan: &BatchPlan,
    targets: &BTreeMap<String, Vec<f64>>,
    settings: &TrainSettings,
    config_hash: &str,
) -> Result<TrainReport> {
    let check = verify_plan(plan, manifest);
    if !check.is_clean() {
        return Err(Error::Invalid(format!(
            "plan does not verify: {}",
            check.violations.join("; ")
        )));
    }
    let state = train(manifest, plan, targets, settings)?;
    let speakers = state
        .per_speaker_loss
        .iter()
        .map(|(s, &final_loss)| SpeakerLoss {
            speaker: s.clone(),
            initial_loss: state.initial_per_speaker_loss[s],
            final_loss,
        })
        .collect();
    Ok(TrainReport {
        tool_version: lrtts_core::TOOL_VERSION.to_string(),
        config_hash: config_hash.to_string(),
        manifest_fingerprint: manifest_fingerprint(manifest),
        plan_fingerprint: plan.fingerprint.clone(),
        sampler: plan.config.clone(),
        settings: settings.clone(),
        steps: state.step,
        final_loss: state.final_loss,
        lr_step_fraction: state.lr_step_fraction,
        pure_lr_batch_fraction: check.pure_lr_batch_fraction,
        speakers,
    })
}

pub fn save_report<T: Serialize>(report: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
