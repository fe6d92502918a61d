//! Constant-SNR white Gaussian noise augmentation of LR recordings.
//!
//! The noise power is set from the *active* speech power of the clean clip,
//! so every noisy copy of a corpus sits at the same SNR regardless of how
//! much silence a recording contains. Each copy draws its noise from a
//! stream keyed by `(base_seed, origin id, copy index)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ConditionId, CorpusManifest, UtteranceRecord};
use crate::dsp::AudioClip;
use crate::level::{active_speech_level, db_to_power, LevelError};
use crate::rng::{mix_seed, KeyBuilder};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("n_copies must be at least 1")]
    NoCopies,
    #[error("snr_db must be finite, got {0}")]
    NonFiniteSnr(f64),
    #[error(transparent)]
    Level(#[from] LevelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSpec {
    pub n_copies: u32,
    pub snr_db: f64,
    pub base_seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            n_copies: 5,
            snr_db: 20.0,
            base_seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.n_copies == 0 {
            return Err(AugmentError::NoCopies);
        }
        if !self.snr_db.is_finite() {
            return Err(AugmentError::NonFiniteSnr(self.snr_db));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyClip {
    pub clip: AudioClip,
    /// Samples clamped back into `[-1, 1]` after adding noise.
    pub clipped: usize,
}

/// Adds white Gaussian noise at `snr_db` below the clip's active speech
/// level. The realization is made exactly zero-mean and rescaled to the
/// target power, so the SNR holds to rounding before any clipping.
pub fn add_wgn(clip: &AudioClip, snr_db: f64, seed: u64) -> Result<NoisyClip, AugmentError> {
    if !snr_db.is_finite() {
        return Err(AugmentError::NonFiniteSnr(snr_db));
    }
    let level = active_speech_level(clip)?;
    let target_power = level.active_power() / db_to_power(snr_db);

    let mut rng = KeyBuilder::new("wgn").u64(seed).rng();
    let mut noise: Vec<f64> = (0..clip.len()).map(|_| rng.normal()).collect();
    let mean = noise.iter().sum::<f64>() / noise.len() as f64;
    noise.iter_mut().for_each(|v| *v -= mean);
    let power = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    let gain = if power > 0.0 {
        libm::sqrt(target_power / power)
    } else {
        0.0
    };

    let mut out = AudioClip::new(
        clip.samples
            .iter()
            .zip(&noise)
            .map(|(s, n)| s + gain * n)
            .collect(),
        clip.sample_rate_hz,
    );
    let clipped = out.clamp_unit();
    Ok(NoisyClip { clip: out, clipped })
}

/// One noisy copy to render.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentJob {
    /// Index of the clean record in the input manifest.
    pub source: usize,
    pub record: UtteranceRecord,
    pub seed: u64,
}

/// File name for a record's audio: the id with path separators replaced.
pub fn audio_file_name(id: &str) -> String {
    let stem: String = id
        .chars()
        .map(|c| {
            if matches!(c, '/' | '\\' | ':') {
                '_'
            } else {
                c
            }
        })
        .collect();
    format!("{stem}.wav")
}

/// Noisy copies for every clean LR record, in manifest order. Copy `k`
/// (1-based) of record `r` gets id `r#augk`, condition `lr-noisy` and its
/// audio at [`audio_file_name`] of that id.
pub fn plan_augmentation(manifest: &CorpusManifest, spec: &AugmentSpec) -> Vec<AugmentJob> {
    let mut jobs = Vec::new();
    for (source, r) in manifest.records.iter().enumerate() {
        if !r.is_lr_clean() {
            continue;
        }
        for k in 1..=spec.n_copies {
            let id = format!("{}#aug{k}", r.id);
            jobs.push(AugmentJob {
                source,
                seed: mix_seed(spec.base_seed, &r.id, u64::from(k)),
                record: UtteranceRecord {
                    audio_path: audio_file_name(&id),
                    id,
                    condition: ConditionId::LrNoisy,
                    origin_id: r.id.clone(),
                    aug_index: k,
                    snr_db: Some(spec.snr_db),
                    ..r.clone()
                },
            });
        }
    }
    jobs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}

/// Merges rendered copies back into the manifest: each copy follows its
/// origin. Copies whose origin is listed in `skipped` are dropped.
pub fn assemble(
    manifest: &CorpusManifest,
    jobs: Vec<AugmentJob>,
    skipped: &[Skipped],
) -> CorpusManifest {
    let mut by_source: Vec<Vec<UtteranceRecord>> = alloc::vec![Vec::new(); manifest.len()];
    for job in jobs {
        let origin = &manifest.records[job.source].id;
        if skipped.iter().all(|s| &s.id != origin) {
            by_source[job.source].push(job.record);
        }
    }
    let mut records = Vec::with_capacity(manifest.len());
    for (r, copies) in manifest.records.iter().zip(by_source) {
        records.push(r.clone());
        records.extend(copies);
    }
    CorpusManifest {
        metadata: manifest.metadata.clone(),
        records,
    }
}
