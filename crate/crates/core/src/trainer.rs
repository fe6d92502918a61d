//! Desk-scale trainer for measuring how sampling strategies feed the LR
//! speaker into the weight updates.
//!
//! Each record is reduced to one target vector (the time mean of its mel
//! cepstrum). The model looks up a 32-dimensional embedding for the
//! record's condition label and maps it linearly to a prediction:
//! `pred = embedding[cond] · W + b`. Training is plain SGD on the batch-mean
//! squared error, one step per planned batch.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ConditionId, CorpusManifest};
use crate::rng::KeyBuilder;
use crate::sampler::{plan_batches, verify_plan, BatchPlan, SamplerConfig, SamplerError};

pub const EMBED_DIM: usize = 32;
const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("no target vector for `{0}`")]
    MissingTarget(String),
    #[error("record `{0}` is not in the manifest")]
    UnknownRecord(String),
    #[error("condition `{0}` has no embedding row")]
    UnknownCondition(String),
    #[error("target for `{id}` has {found} dims, expected {expected}")]
    TargetDimension {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("loss became non-finite at step {0}")]
    DivergenceDetected(u64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("plan does not match manifest: {0}")]
    PlanMismatch(String),
    #[error("probe precondition failed: {0}")]
    Precondition(&'static str),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    /// Row `k` of the embedding table belongs to `conditions[k]`.
    pub conditions: Vec<ConditionId>,
    pub d_out: usize,
    /// `conditions.len() × EMBED_DIM`, row-major.
    pub embedding: Vec<f64>,
    /// `EMBED_DIM × d_out`, row-major.
    pub output_map: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: Vec<f64>,
    pub output_map: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ToyModel {
    pub fn condition_index(&self, condition: &ConditionId) -> Option<usize> {
        self.conditions.binary_search(condition).ok()
    }

    pub fn embedding_row(&self, k: usize) -> &[f64] {
        &self.embedding[k * EMBED_DIM..(k + 1) * EMBED_DIM]
    }

    pub fn predict(&self, k: usize) -> Vec<f64> {
        let e = self.embedding_row(k);
        let mut out = self.bias.clone();
        for (d, &ed) in e.iter().enumerate() {
            let row = &self.output_map[d * self.d_out..(d + 1) * self.d_out];
            for (o, w) in out.iter_mut().zip(row) {
                *o += ed * w;
            }
        }
        out
    }

    fn params_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.embedding, &mut self.output_map, &mut self.bias]
    }

    fn apply(&mut self, grads: &Gradients, learning_rate: f64) {
        let steps = [&grads.embedding, &grads.output_map, &grads.bias];
        for (param, grad) in self.params_mut().into_iter().zip(steps) {
            for (p, g) in param.iter_mut().zip(grad) {
                *p -= learning_rate * g;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.embedding, &self.output_map, &self.bias]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// One row per condition present in `manifest` (sorted), all parameters
/// uniform in `[-0.1, 0.1]` from the stream keyed by `seed`.
pub fn init_model(manifest: &CorpusManifest, d_out: usize, seed: u64) -> ToyModel {
    let conditions = manifest.conditions();
    let mut rng = KeyBuilder::new("init").u64(seed).rng();
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| rng.uniform(-INIT_RANGE, INIT_RANGE))
            .collect()
    };
    let embedding = draw(conditions.len() * EMBED_DIM);
    let output_map = draw(EMBED_DIM * d_out);
    let bias = draw(d_out);
    ToyModel {
        conditions,
        d_out,
        embedding,
        output_map,
        bias,
    }
}

/// A record resolved to its embedding row and target.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub condition: usize,
    pub target: &'a [f64],
}

/// Lookup from record id to condition row, speaker and target.
pub struct TrainingSet<'a> {
    entries: BTreeMap<&'a str, (usize, &'a str, &'a [f64])>,
}

impl<'a> TrainingSet<'a> {
    pub fn new(
        model: &ToyModel,
        manifest: &'a CorpusManifest,
        targets: &'a BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, TrainError> {
        let mut entries = BTreeMap::new();
        for r in &manifest.records {
            let target = targets
                .get(&r.id)
                .ok_or_else(|| TrainError::MissingTarget(r.id.clone()))?;
            if target.len() != model.d_out {
                return Err(TrainError::TargetDimension {
                    id: r.id.clone(),
                    expected: model.d_out,
                    found: target.len(),
                });
            }
            let k = model
                .condition_index(&r.condition)
                .ok_or_else(|| TrainError::UnknownCondition(r.condition.to_string()))?;
            entries.insert(r.id.as_str(), (k, r.speaker.as_str(), target.as_slice()));
        }
        Ok(Self { entries })
    }

    pub fn resolve(&self, ids: &[String]) -> Result<Vec<Example<'a>>, TrainError> {
        ids.iter()
            .map(|id| {
                self.entries
                    .get(id.as_str())
                    .map(|&(condition, _, target)| Example { condition, target })
                    .ok_or_else(|| TrainError::UnknownRecord(id.clone()))
            })
            .collect()
    }

    /// Mean squared error of every record, averaged per speaker.
    pub fn per_speaker_loss(&self, model: &ToyModel) -> BTreeMap<String, f64> {
        let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for &(k, speaker, target) in self.entries.values() {
            let err = squared_error(&model.predict(k), target);
            let slot = sums.entry(speaker).or_insert((0.0, 0));
            slot.0 += err;
            slot.1 += 1;
        }
        sums.into_iter()
            .map(|(s, (sum, n))| (s.to_string(), sum / n as f64))
            .collect()
    }

    /// Mean squared error over all records.
    pub fn loss(&self, model: &ToyModel) -> f64 {
        let total: f64 = self
            .entries
            .values()
            .map(|&(k, _, target)| squared_error(&model.predict(k), target))
            .sum();
        total / self.entries.len().max(1) as f64
    }
}

fn squared_error(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum()
}

/// Batch-mean of `‖pred − target‖²` and its exact gradient.
pub fn loss_and_grad(
    model: &ToyModel,
    batch: &[Example<'_>],
) -> Result<(f64, Gradients), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let d_out = model.d_out;
    let mut grads = Gradients {
        embedding: vec![0.0; model.embedding.len()],
        output_map: vec![0.0; model.output_map.len()],
        bias: vec![0.0; d_out],
    };
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        if ex.target.len() != d_out {
            return Err(TrainError::TargetDimension {
                id: String::new(),
                expected: d_out,
                found: ex.target.len(),
            });
        }
        let pred = model.predict(ex.condition);
        let residual: Vec<f64> = pred.iter().zip(ex.target).map(|(p, t)| p - t).collect();
        loss += scale * residual.iter().map(|r| r * r).sum::<f64>();
        let g: Vec<f64> = residual.iter().map(|r| 2.0 * scale * r).collect();

        let e = model.embedding_row(ex.condition);
        for (o, gb) in grads.bias.iter_mut().zip(&g) {
            *o += gb;
        }
        for d in 0..EMBED_DIM {
            let w_row = &model.output_map[d * d_out..(d + 1) * d_out];
            let gw_row = &mut grads.output_map[d * d_out..(d + 1) * d_out];
            let mut ge = 0.0;
            for o in 0..d_out {
                gw_row[o] += e[d] * g[o];
                ge += w_row[o] * g[o];
            }
            grads.embedding[ex.condition * EMBED_DIM + d] += ge;
        }
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    /// Passes over the plan.
    pub epochs: u32,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 1,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: ToyModel,
    pub step: u64,
    pub learning_rate: f64,
    /// Per-speaker mean squared error of the final model over all records.
    pub per_speaker_loss: BTreeMap<String, f64>,
    pub initial_per_speaker_loss: BTreeMap<String, f64>,
    /// Loss over all records after training.
    pub final_loss: f64,
    /// Batch loss at every step, before the update.
    pub loss_history: Vec<f64>,
    /// Fraction of steps whose gradient reached an LR embedding row.
    pub lr_step_fraction: f64,
}

/// SGD over the plan's batches in order, `epochs` times.
pub fn train(
    manifest: &CorpusManifest,
    plan: &BatchPlan,
    targets: &BTreeMap<String, Vec<f64>>,
    settings: &TrainSettings,
) -> Result<TrainState, TrainError> {
    let report = verify_plan(plan, manifest);
    if let Some(v) = report.violations.first() {
        return Err(TrainError::PlanMismatch(v.clone()));
    }
    let d_out = targets.values().next().map_or(0, Vec::len);
    let mut model = init_model(manifest, d_out, settings.seed);
    let set = TrainingSet::new(&model, manifest, targets)?;
    let initial = set.per_speaker_loss(&model);
    let lr_rows: Vec<bool> = model.conditions.iter().map(ConditionId::is_lr).collect();

    let mut step = 0u64;
    let mut lr_steps = 0u64;
    let mut history = Vec::with_capacity(plan.batches.len() * settings.epochs as usize);
    for _ in 0..settings.epochs {
        for batch in &plan.batches {
            let examples = set.resolve(&batch.record_ids)?;
            let (loss, grads) = loss_and_grad(&model, &examples)?;
            if !loss.is_finite() {
                return Err(TrainError::DivergenceDetected(step));
            }
            if examples.iter().any(|e| lr_rows[e.condition]) {
                lr_steps += 1;
            }
            history.push(loss);
            model.apply(&grads, settings.learning_rate);
            if !model.is_finite() {
                return Err(TrainError::DivergenceDetected(step));
            }
            step += 1;
        }
    }
    Ok(TrainState {
        per_speaker_loss: set.per_speaker_loss(&model),
        final_loss: set.loss(&model),
        initial_per_speaker_loss: initial,
        loss_history: history,
        lr_step_fraction: lr_steps as f64 / step.max(1) as f64,
        learning_rate: settings.learning_rate,
        step,
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeArm {
    pub sampler: SamplerConfig,
    pub per_speaker_loss: BTreeMap<String, f64>,
    pub final_loss: f64,
    pub lr_step_fraction: f64,
    pub pure_lr_batch_fraction: f64,
    /// Share of the effective sampling pool held by LR entries.
    pub lr_bin_proportion: f64,
    pub lr_hr_draw_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub a: ProbeArm,
    pub b: ProbeArm,
}

/// Trains one model per sampler config from the same initialization and
/// compares how much of the training signal reached the LR speaker.
pub fn imbalance_probe(
    manifest: &CorpusManifest,
    targets: &BTreeMap<String, Vec<f64>>,
    config_a: &SamplerConfig,
    config_b: &SamplerConfig,
    settings: &TrainSettings,
) -> Result<ProbeReport, TrainError> {
    let n_lr = manifest.lr_records().count();
    let n_hr = manifest.len() - n_lr;
    if n_lr == 0 || n_hr == 0 {
        return Err(TrainError::Precondition("need both HR and LR records"));
    }
    if n_hr < 10 * n_lr {
        return Err(TrainError::Precondition(
            "HR:LR imbalance must be at least 10:1",
        ));
    }
    let arm = |config: &SamplerConfig| -> Result<ProbeArm, TrainError> {
        let plan = plan_batches(manifest, config)?;
        let report = verify_plan(&plan, manifest);
        let state = train(manifest, &plan, targets, settings)?;
        let weight = if config.mode.is_weighted() {
            config.lr_weight as usize
        } else {
            1
        };
        let lr_pool = n_lr * weight;
        Ok(ProbeArm {
            sampler: config.clone(),
            per_speaker_loss: state.per_speaker_loss,
            final_loss: state.final_loss,
            lr_step_fraction: state.lr_step_fraction,
            pure_lr_batch_fraction: report.pure_lr_batch_fraction,
            lr_bin_proportion: lr_pool as f64 / (lr_pool + n_hr) as f64,
            lr_hr_draw_ratio: report.lr_hr_draw_ratio,
        })
    };
    Ok(ProbeReport {
        a: arm(config_a)?,
        b: arm(config_b)?,
    })
}
