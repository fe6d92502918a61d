//! Batch plans: which records go into which training batch.
//!
//! All modes traverse a pool in shuffled order without replacement and
//! reshuffle when a pass is exhausted. Pools are built from sorted record
//! ids, so a plan depends only on the set of ids and the config.
//!
//! * `Uniform` – one pool with every record.
//! * `Weighted` – one pool where each LR record appears `lr_weight` times.
//! * `Binned` – an HR pool and an LR pool; every batch comes from a single
//!   pool, chosen with probability proportional to the pool sizes.
//! * `BinnedWeighted` – `Binned` with the LR pool replicated `lr_weight`
//!   times, which raises both its selection probability and how often each
//!   LR record is drawn.
//!
//! The shuffle of pass `p` of pool `b` uses the stream keyed by
//! `("shuffle", seed, b, p)`; bin selection uses `("bin-choice", seed)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusManifest, ResourceClass};
use crate::rng::{CounterRng, KeyBuilder};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplerError {
    #[error("{bin} bin has {size} entries, fewer than the batch size {batch_size}")]
    BinTooSmall {
        bin: BinLabel,
        size: usize,
        batch_size: usize,
    },
    #[error("manifest has no records to sample")]
    EmptyPool,
    #[error("invalid sampler config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    Uniform,
    Weighted,
    Binned,
    BinnedWeighted,
}

impl SamplingMode {
    pub fn is_binned(self) -> bool {
        matches!(self, SamplingMode::Binned | SamplingMode::BinnedWeighted)
    }

    pub fn is_weighted(self) -> bool {
        matches!(self, SamplingMode::Weighted | SamplingMode::BinnedWeighted)
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::Uniform => "uniform",
            SamplingMode::Weighted => "weighted",
            SamplingMode::Binned => "binned",
            SamplingMode::BinnedWeighted => "binned-weighted",
        })
    }
}

impl core::str::FromStr for SamplingMode {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "uniform" => SamplingMode::Uniform,
            "weighted" => SamplingMode::Weighted,
            "binned" => SamplingMode::Binned,
            "binned-weighted" => SamplingMode::BinnedWeighted,
            _ => return Err(SamplerError::InvalidConfig("unknown sampling mode")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub batch_size: usize,
    pub mode: SamplingMode,
    pub lr_weight: u32,
    pub seed: u64,
    pub n_batches: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            mode: SamplingMode::Binned,
            lr_weight: 1,
            seed: 0,
            n_batches: 1000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.batch_size == 0 {
            return Err(SamplerError::InvalidConfig("batch_size must be positive"));
        }
        if self.n_batches == 0 {
            return Err(SamplerError::InvalidConfig("n_batches must be positive"));
        }
        if self.lr_weight == 0 {
            return Err(SamplerError::InvalidConfig("lr_weight must be at least 1"));
        }
        if !self.mode.is_weighted() && self.lr_weight != 1 {
            return Err(SamplerError::InvalidConfig(
                "lr_weight must be 1 in uniform and binned modes",
            ));
        }
        Ok(())
    }

    fn effective_weight(&self) -> usize {
        if self.mode.is_weighted() {
            self.lr_weight as usize
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BinLabel {
    HR,
    LR,
    Mixed,
}

impl fmt::Display for BinLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinLabel::HR => "HR",
            BinLabel::LR => "LR",
            BinLabel::Mixed => "Mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub bin: BinLabel,
    pub record_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub config: SamplerConfig,
    /// See [`manifest_fingerprint`].
    pub fingerprint: String,
    pub batches: Vec<Batch>,
}

/// Hex SHA-256 over the sorted record ids.
pub fn manifest_fingerprint(manifest: &CorpusManifest) -> String {
    let mut ids: Vec<&str> = manifest.records.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    let key = ids
        .iter()
        .fold(
            KeyBuilder::new("fingerprint").u64(ids.len() as u64),
            |k, id| k.str(id),
        )
        .key();
    key.iter().map(|b| format!("{b:02x}")).collect()
}

/// Shuffled-traversal pool.
struct Pool {
    tag: &'static str,
    seed: u64,
    entries: Vec<String>,
    order: Vec<usize>,
    pos: usize,
    pass: u64,
}

impl Pool {
    /// `entries` pairs an id with its replication count; order is by id.
    fn new(tag: &'static str, seed: u64, mut entries: Vec<(&str, usize)>) -> Self {
        entries.sort_unstable_by(|a, b| a.0.cmp(b.0));
        let entries: Vec<String> = entries
            .iter()
            .flat_map(|(id, k)| core::iter::repeat_n(String::from(*id), *k))
            .collect();
        Self {
            tag,
            seed,
            entries,
            order: Vec::new(),
            pos: 0,
            pass: 0,
        }
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn next(&mut self) -> &str {
        if self.pos >= self.order.len() {
            self.order = (0..self.entries.len()).collect();
            let mut rng = KeyBuilder::new("shuffle")
                .u64(self.seed)
                .str(self.tag)
                .u64(self.pass)
                .rng();
            rng.shuffle(&mut self.order);
            self.pass += 1;
            self.pos = 0;
        }
        let idx = self.order[self.pos];
        self.pos += 1;
        &self.entries[idx]
    }

    fn take(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| String::from(self.next())).collect()
    }
}

/// Builds a deterministic batch plan for `manifest`.
pub fn plan_batches(
    manifest: &CorpusManifest,
    config: &SamplerConfig,
) -> Result<BatchPlan, SamplerError> {
    config.validate()?;
    let weight = config.effective_weight();
    let (lr_ids, hr_ids): (Vec<&str>, Vec<&str>) = {
        let (lr, hr): (Vec<_>, Vec<_>) = manifest.records.iter().partition(|r| r.is_lr());
        (
            lr.iter().map(|r| r.id.as_str()).collect(),
            hr.iter().map(|r| r.id.as_str()).collect(),
        )
    };

    let hr_entries: Vec<(&str, usize)> = hr_ids.iter().map(|id| (*id, 1)).collect();
    let lr_entries: Vec<(&str, usize)> = lr_ids.iter().map(|id| (*id, weight)).collect();

    let batches = if config.mode.is_binned() {
        let mut hr = Pool::new("hr", config.seed, hr_entries);
        let mut lr = Pool::new("lr", config.seed, lr_entries);
        for (bin, pool) in [(BinLabel::HR, &hr), (BinLabel::LR, &lr)] {
            if pool.len() < config.batch_size {
                return Err(SamplerError::BinTooSmall {
                    bin,
                    size: pool.len(),
                    batch_size: config.batch_size,
                });
            }
        }
        let total = (hr.len() + lr.len()) as u64;
        let mut chooser: CounterRng = KeyBuilder::new("bin-choice").u64(config.seed).rng();
        (0..config.n_batches)
            .map(|_| {
                if chooser.below(total) < lr.len() as u64 {
                    Batch {
                        bin: BinLabel::LR,
                        record_ids: lr.take(config.batch_size),
                    }
                } else {
                    Batch {
                        bin: BinLabel::HR,
                        record_ids: hr.take(config.batch_size),
                    }
                }
            })
            .collect()
    } else {
        let mut all = Pool::new("all", config.seed, [hr_entries, lr_entries].concat());
        if all.len() == 0 {
            return Err(SamplerError::EmptyPool);
        }
        (0..config.n_batches)
            .map(|_| Batch {
                bin: BinLabel::Mixed,
                record_ids: all.take(config.batch_size),
            })
            .collect()
    };

    Ok(BatchPlan {
        config: config.clone(),
        fingerprint: manifest_fingerprint(manifest),
        batches,
    })
}

/// Draw statistics of one resource class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassDraws {
    pub records: usize,
    pub draws: u64,
    pub min_per_record: u64,
    pub max_per_record: u64,
}

impl ClassDraws {
    pub fn mean_per_record(&self) -> f64 {
        if self.records == 0 {
            0.0
        } else {
            self.draws as f64 / self.records as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub violations: Vec<String>,
    pub n_batches: usize,
    /// Batches made only of LR records.
    pub pure_lr_batch_fraction: f64,
    /// Batches containing at least one LR record.
    pub lr_touch_fraction: f64,
    pub lr: ClassDraws,
    pub hr: ClassDraws,
    /// Mean draws per LR record over mean draws per HR record.
    pub lr_hr_draw_ratio: Option<f64>,
    pub draw_counts: BTreeMap<String, u64>,
}

impl PlanReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a plan against the manifest it claims to come from and collects
/// draw statistics.
pub fn verify_plan(plan: &BatchPlan, manifest: &CorpusManifest) -> PlanReport {
    let index = manifest.index();
    let mut violations = Vec::new();
    if plan.fingerprint != manifest_fingerprint(manifest) {
        violations.push(String::from("fingerprint does not match manifest"));
    }
    if plan.batches.len() != plan.config.n_batches {
        violations.push(format!(
            "plan has {} batches, config says {}",
            plan.batches.len(),
            plan.config.n_batches
        ));
    }

    let mut draw_counts: BTreeMap<String, u64> =
        manifest.records.iter().map(|r| (r.id.clone(), 0)).collect();
    let (mut pure_lr, mut touch_lr) = (0usize, 0usize);
    for (b, batch) in plan.batches.iter().enumerate() {
        if batch.record_ids.len() != plan.config.batch_size {
            violations.push(format!(
                "batch {b}: {} entries, expected {}",
                batch.record_ids.len(),
                plan.config.batch_size
            ));
        }
        if plan.config.mode.is_binned() == (batch.bin == BinLabel::Mixed) {
            violations.push(format!(
                "batch {b}: label {} not allowed in {} mode",
                batch.bin, plan.config.mode
            ));
        }
        let (mut n_lr, mut n_known) = (0usize, 0usize);
        for id in &batch.record_ids {
            let Some(record) = index.get(id.as_str()) else {
                violations.push(format!("batch {b}: unknown id `{id}`"));
                continue;
            };
            n_known += 1;
            *draw_counts.get_mut(id.as_str()).unwrap() += 1;
            let class = record.resource_class;
            if class == ResourceClass::LowResource {
                n_lr += 1;
            }
            let expected = match batch.bin {
                BinLabel::HR => Some(ResourceClass::HighResource),
                BinLabel::LR => Some(ResourceClass::LowResource),
                BinLabel::Mixed => None,
            };
            if expected.is_some_and(|c| c != class) {
                violations.push(format!(
                    "batch {b}: `{id}` is {class} inside a {} batch",
                    batch.bin
                ));
            }
        }
        if n_known > 0 && n_lr == n_known {
            pure_lr += 1;
        }
        if n_lr > 0 {
            touch_lr += 1;
        }
    }

    let class_draws = |class: ResourceClass| {
        let counts: Vec<u64> = manifest
            .records
            .iter()
            .filter(|r| r.resource_class == class)
            .map(|r| draw_counts[r.id.as_str()])
            .collect();
        ClassDraws {
            records: counts.len(),
            draws: counts.iter().sum(),
            min_per_record: counts.iter().copied().min().unwrap_or(0),
            max_per_record: counts.iter().copied().max().unwrap_or(0),
        }
    };
    let lr = class_draws(ResourceClass::LowResource);
    let hr = class_draws(ResourceClass::HighResource);
    let n = plan.batches.len().max(1) as f64;
    PlanReport {
        violations,
        n_batches: plan.batches.len(),
        pure_lr_batch_fraction: pure_lr as f64 / n,
        lr_touch_fraction: touch_lr as f64 / n,
        lr_hr_draw_ratio: (lr.records > 0 && hr.draws > 0)
            .then(|| lr.mean_per_record() / hr.mean_per_record()),
        lr,
        hr,
        draw_counts,
    }
}
