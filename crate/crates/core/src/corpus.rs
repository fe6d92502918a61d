//! Corpus data model: speakers, acoustic-condition labels, utterance records
//! and the manifest that carries them through every pipeline stage.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum effective number of LR sentences below which training was
/// observed to be unstable.
pub const STABILITY_THRESHOLD: u64 = 1000;

/// Largest allowed difference between a stored and a measured duration.
pub const DURATION_TOLERANCE_S: f64 = 0.010;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("invalid value for `{field}`: `{value}`")]
    InvalidField { field: &'static str, value: String },
}

/// Speaker token. Non-empty and free of whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SpeakerId(String);

impl SpeakerId {
    pub fn new(value: impl Into<String>) -> Result<Self, CorpusError> {
        let value = value.into();
        if value.is_empty() || value.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidField {
                field: "speaker",
                value,
            });
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for SpeakerId {
    type Error = CorpusError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<SpeakerId> for String {
    fn from(id: SpeakerId) -> Self {
        id.0
    }
}

impl fmt::Display for SpeakerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Acoustic-condition label selecting a condition embedding.
///
/// Every HR speaker gets its own label; the LR speaker has two, one for the
/// original recordings and one shared by all noise-augmented copies. Only
/// [`ConditionId::LrClean`] is used at inference time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ConditionId {
    Hr(SpeakerId),
    LrClean,
    LrNoisy,
}

impl ConditionId {
    /// The label used when synthesizing the LR speaker.
    pub const INFERENCE: ConditionId = ConditionId::LrClean;

    pub fn is_lr(&self) -> bool {
        matches!(self, ConditionId::LrClean | ConditionId::LrNoisy)
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionId::Hr(speaker) => write!(f, "hr:{speaker}"),
            ConditionId::LrClean => f.write_str("lr-clean"),
            ConditionId::LrNoisy => f.write_str("lr-noisy"),
        }
    }
}

impl FromStr for ConditionId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lr-clean" => Ok(ConditionId::LrClean),
            "lr-noisy" => Ok(ConditionId::LrNoisy),
            _ => match s.strip_prefix("hr:") {
                Some(speaker) => SpeakerId::new(speaker)
                    .map(ConditionId::Hr)
                    .map_err(|_| invalid("condition", s)),
                None => Err(invalid("condition", s)),
            },
        }
    }
}

impl TryFrom<String> for ConditionId {
    type Error = CorpusError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ConditionId> for String {
    fn from(id: ConditionId) -> Self {
        id.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceClass {
    #[serde(rename = "hr")]
    HighResource,
    #[serde(rename = "lr")]
    LowResource,
}

impl fmt::Display for ResourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResourceClass::HighResource => "HR",
            ResourceClass::LowResource => "LR",
        })
    }
}

/// One audio sample of the corpus. Field order is the manifest line order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRecord {
    pub id: String,
    /// Relative to the audio root, `/`-separated.
    pub audio_path: String,
    pub transcript: String,
    pub speaker: SpeakerId,
    pub resource_class: ResourceClass,
    pub condition: ConditionId,
    pub duration_s: f64,
    /// Id of the clean record this one was derived from; equals `id` for
    /// originals.
    pub origin_id: String,
    /// 0 for clean records, 1..=n for noisy copies.
    pub aug_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

impl UtteranceRecord {
    /// A clean, non-augmented record.
    pub fn clean(
        id: impl Into<String>,
        audio_path: impl Into<String>,
        transcript: impl Into<String>,
        speaker: SpeakerId,
        resource_class: ResourceClass,
        duration_s: f64,
    ) -> Self {
        let id = id.into();
        let condition = match resource_class {
            ResourceClass::HighResource => ConditionId::Hr(speaker.clone()),
            ResourceClass::LowResource => ConditionId::LrClean,
        };
        Self {
            origin_id: id.clone(),
            id,
            audio_path: audio_path.into(),
            transcript: transcript.into(),
            speaker,
            resource_class,
            condition,
            duration_s,
            aug_index: 0,
            snr_db: None,
        }
    }

    pub fn is_lr(&self) -> bool {
        self.resource_class == ResourceClass::LowResource
    }

    pub fn is_lr_clean(&self) -> bool {
        self.is_lr() && self.condition == ConditionId::LrClean && self.aug_index == 0
    }
}

/// Ordered records plus free-form string metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusManifest {
    pub metadata: BTreeMap<String, String>,
    pub records: Vec<UtteranceRecord>,
}

impl CorpusManifest {
    /// Builds a manifest, rejecting duplicate record ids.
    pub fn new(
        metadata: BTreeMap<String, String>,
        records: Vec<UtteranceRecord>,
    ) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for record in &records {
            if !seen.insert(record.id.as_str()) {
                return Err(CorpusError::DuplicateId(record.id.clone()));
            }
        }
        Ok(Self { metadata, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&UtteranceRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Id → record lookup table.
    pub fn index(&self) -> BTreeMap<&str, &UtteranceRecord> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }

    pub fn lr_records(&self) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(|r| r.is_lr())
    }

    /// Distinct condition labels in sorted order.
    pub fn conditions(&self) -> Vec<ConditionId> {
        let set: BTreeSet<_> = self.records.iter().map(|r| r.condition.clone()).collect();
        set.into_iter().collect()
    }

    /// Distinct speakers in sorted order.
    pub fn speakers(&self) -> Vec<SpeakerId> {
        let set: BTreeSet<_> = self.records.iter().map(|r| r.speaker.clone()).collect();
        set.into_iter().collect()
    }

    /// Total duration in seconds.
    pub fn total_duration_s(&self) -> f64 {
        self.records.iter().map(|r| r.duration_s).sum()
    }

    /// Checks every record invariant. `audio` reports, for an `audio_path`,
    /// whether the file exists and (optionally) its measured duration.
    pub fn validate<F>(&self, mut audio: F) -> ValidationReport
    where
        F: FnMut(&str) -> AudioStatus,
    {
        let mut report = ValidationReport::default();
        let index = self.index();
        let mut seen = BTreeSet::new();

        for r in &self.records {
            let mut finding = |message: String| {
                report.findings.push(Finding {
                    record_id: r.id.clone(),
                    message,
                })
            };

            if !seen.insert(r.id.as_str()) {
                finding("duplicate id".into());
            }
            if !(r.duration_s > 0.0 && r.duration_s.is_finite()) {
                finding("duration_s must be > 0".into());
            }

            match (&r.resource_class, &r.condition) {
                (ResourceClass::HighResource, ConditionId::Hr(s)) if *s == r.speaker => {}
                (ResourceClass::HighResource, c) => finding(format!(
                    "HR record must carry condition hr:{}, found {c}",
                    r.speaker
                )),
                (ResourceClass::LowResource, ConditionId::LrClean) => {
                    if r.aug_index != 0 {
                        finding("lr-clean record must have aug_index 0".into());
                    }
                }
                (ResourceClass::LowResource, ConditionId::LrNoisy) => {
                    if r.aug_index == 0 {
                        finding("lr-noisy record must have aug_index >= 1".into());
                    }
                }
                (ResourceClass::LowResource, c) => finding(format!(
                    "LR record must carry lr-clean or lr-noisy, found {c}"
                )),
            }

            if r.aug_index == 0 {
                if r.snr_db.is_some() {
                    finding("snr_db must be absent when aug_index is 0".into());
                }
                if r.origin_id != r.id {
                    finding(format!(
                        "clean record has origin_id `{}` != id",
                        r.origin_id
                    ));
                }
            } else {
                match r.snr_db {
                    Some(snr) if snr.is_finite() => {}
                    Some(_) => finding("snr_db must be finite".into()),
                    None => finding("snr_db must be present when aug_index > 0".into()),
                }
                match index.get(r.origin_id.as_str()) {
                    None => finding(format!("dangling origin_id `{}`", r.origin_id)),
                    Some(origin) => {
                        if origin.transcript != r.transcript {
                            finding(format!("transcript differs from origin `{}`", origin.id));
                        }
                        if origin.duration_s != r.duration_s {
                            finding(format!("duration_s differs from origin `{}`", origin.id));
                        }
                        if origin.resource_class != r.resource_class {
                            finding(format!(
                                "resource class differs from origin `{}`",
                                origin.id
                            ));
                        }
                    }
                }
            }

            match audio(&r.audio_path) {
                AudioStatus::Missing => finding(format!("audio file missing: {}", r.audio_path)),
                AudioStatus::Unreadable(reason) => {
                    finding(format!("audio file unreadable: {}: {reason}", r.audio_path))
                }
                AudioStatus::Present {
                    duration_s: Some(actual),
                } if libm::fabs(actual - r.duration_s) > DURATION_TOLERANCE_S => finding(format!(
                    "stored duration {} s differs from audio duration {actual} s",
                    r.duration_s
                )),
                AudioStatus::Present { .. } | AudioStatus::Unchecked => {}
            }
        }
        report
    }
}

/// What the caller knows about a record's audio file.
#[derive(Debug, Clone, PartialEq)]
pub enum AudioStatus {
    Unchecked,
    Missing,
    Unreadable(String),
    Present { duration_s: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub record_id: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.record_id, self.message)
    }
}

/// Empty iff the manifest is valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LrCount {
    pub count: u64,
    /// Set when `count` is under [`STABILITY_THRESHOLD`].
    pub below_threshold: bool,
}

/// Number of LR records (clean and noisy) times the sampling weight.
pub fn effective_lr_count(manifest: &CorpusManifest, weight_factor: u32) -> LrCount {
    debug_assert!(weight_factor >= 1);
    let count = manifest.lr_records().count() as u64 * u64::from(weight_factor);
    LrCount {
        count,
        below_threshold: count < STABILITY_THRESHOLD,
    }
}

fn invalid(field: &'static str, value: &str) -> CorpusError {
    CorpusError::InvalidField {
        field,
        value: value.to_string(),
    }
}
