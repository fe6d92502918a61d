//! Algorithms behind the `lrtts` corpus toolkit.
//!
//! Everything in this crate is pure computation over in-memory values and
//! only needs `alloc`: the corpus data model, log-mel and mel-cepstral
//! features, active speech level measurement, constant-SNR white noise
//! augmentation, pause detection and duration-sorted subsets, weighted and
//! binned batch planning, MCD-DTW and cosine-similarity scoring, and a small
//! linear trainer used to probe class imbalance. File formats and the command
//! line live in the `lrtts` crate.

#![no_std]
#![warn(rust_2018_idioms, unused_qualifications)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod corpus;
pub mod dsp;
pub mod level;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod segment;
pub mod trainer;

pub use corpus::{
    effective_lr_count, ConditionId, CorpusManifest, LrCount, ResourceClass, SpeakerId,
    UtteranceRecord, ValidationReport,
};
pub use dsp::{AudioClip, CepstralSequence, FeatureParams, MelSpectrogram};
pub use level::{active_speech_level, measured_snr, SpeechLevelReport};

/// Version string embedded in every output header.
pub const TOOL_VERSION: &str = concat!("lrtts ", env!("CARGO_PKG_VERSION"));
