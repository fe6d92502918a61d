//! Splitting LR recordings at speech pauses and building duration-sorted
//! LR subsets.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::audio_file_name;
use crate::corpus::{CorpusManifest, UtteranceRecord};
use crate::dsp::AudioClip;
use crate::level::{active_speech_level, power_to_db, LevelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SegmentError {
    #[error("no speech activity detected")]
    NoSpeechActivity,
    #[error("alignment tokens do not match the transcript of `{0}`")]
    AlignmentMismatch(String),
    #[error("alignment is not monotonic at word {0}")]
    InvalidAlignment(usize),
    #[error("record `{0}` is not a clean LR record")]
    NotLrClean(String),
    #[error("subset needs {needed_s} s but only {available_s} s are available")]
    InsufficientData { needed_s: f64, available_s: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
}

impl From<LevelError> for SegmentError {
    fn from(_: LevelError) -> Self {
        SegmentError::NoSpeechActivity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PauseParams {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Frame energy threshold relative to the clip's active speech level.
    pub energy_floor_db: f64,
    pub min_pause_s: f64,
    pub min_segment_s: f64,
}

impl Default for PauseParams {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            energy_floor_db: -35.0,
            min_pause_s: 0.3,
            min_segment_s: 1.0,
        }
    }
}

impl PauseParams {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if !(self.frame_ms > 0.0 && self.hop_ms > 0.0 && self.hop_ms <= self.frame_ms) {
            return Err(SegmentError::InvalidParams("need 0 < hop_ms <= frame_ms"));
        }
        if !(self.min_pause_s > self.hop_ms / 1000.0) {
            return Err(SegmentError::InvalidParams(
                "min_pause_s must exceed the hop",
            ));
        }
        if !(self.min_segment_s > 0.0) {
            return Err(SegmentError::InvalidParams(
                "min_segment_s must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start_s: f64,
    pub end_s: f64,
}

impl Span {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Speech segments of `clip`, ordered and non-overlapping.
///
/// Frames whose energy exceeds `active level + energy_floor_db` are speech.
/// Each frame stands for the hop-wide interval around its center; runs
/// touching the clip edges extend to them. Runs separated by less than
/// `min_pause_s` are joined, then segments shorter than `min_segment_s` are
/// absorbed by the neighbor across the shorter gap.
pub fn detect_pauses(clip: &AudioClip, params: &PauseParams) -> Result<Vec<Span>, SegmentError> {
    params.validate()?;
    let level = active_speech_level(clip)?;
    let rate = f64::from(clip.sample_rate_hz);
    let frame = (libm::round(params.frame_ms * rate / 1000.0) as usize).clamp(1, clip.len());
    let hop = (libm::round(params.hop_ms * rate / 1000.0) as usize).max(1);
    let n_frames = 1 + (clip.len() - frame) / hop;
    let threshold = level.active_level_db + params.energy_floor_db;
    let duration = clip.duration_s();

    let mut runs: Vec<(usize, usize)> = Vec::new();
    for t in 0..n_frames {
        let x = &clip.samples[t * hop..t * hop + frame];
        let energy = x.iter().map(|v| v * v).sum::<f64>() / frame as f64;
        if energy > 0.0 && power_to_db(energy) > threshold {
            match runs.last_mut() {
                Some((_, end)) if *end + 1 == t => *end = t,
                _ => runs.push((t, t)),
            }
        }
    }
    if runs.is_empty() {
        return Err(SegmentError::NoSpeechActivity);
    }

    let hop_s = hop as f64 / rate;
    let center = |t: usize| (t * hop) as f64 / rate + frame as f64 / (2.0 * rate);
    let mut spans: Vec<Span> = Vec::new();
    for (a, b) in runs {
        let start_s = if a == 0 {
            0.0
        } else {
            (center(a) - hop_s / 2.0).max(0.0)
        };
        let end_s = if b + 1 == n_frames {
            duration
        } else {
            (center(b) + hop_s / 2.0).min(duration)
        };
        match spans.last_mut() {
            Some(prev) if start_s - prev.end_s < params.min_pause_s => prev.end_s = end_s,
            _ => spans.push(Span { start_s, end_s }),
        }
    }

    while spans.len() > 1 {
        let Some(i) = spans
            .iter()
            .position(|s| s.duration_s() < params.min_segment_s)
        else {
            break;
        };
        let gap_before = (i > 0).then(|| spans[i].start_s - spans[i - 1].end_s);
        let gap_after = (i + 1 < spans.len()).then(|| spans[i + 1].start_s - spans[i].end_s);
        let into_prev = match (gap_before, gap_after) {
            (Some(b), Some(a)) => b <= a,
            (Some(_), None) => true,
            _ => false,
        };
        if into_prev {
            spans[i - 1].end_s = spans[i].end_s;
        } else {
            spans[i + 1].start_s = spans[i].start_s;
        }
        spans.remove(i);
    }
    Ok(spans)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedWord {
    pub token: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// Word timings produced by an external aligner.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WordAlignment {
    pub words: Vec<AlignedWord>,
}

impl WordAlignment {
    pub fn validate(&self) -> Result<(), SegmentError> {
        let mut prev_end = f64::NEG_INFINITY;
        for (i, w) in self.words.iter().enumerate() {
            if !(w.start_s <= w.end_s && w.start_s >= prev_end) {
                return Err(SegmentError::InvalidAlignment(i));
            }
            prev_end = w.end_s;
        }
        Ok(())
    }

    fn matches_transcript(&self, transcript: &str) -> bool {
        transcript
            .split_whitespace()
            .eq(self.words.iter().flat_map(|w| w.token.split_whitespace()))
    }
}

/// A child record together with its audio.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPiece {
    pub record: UtteranceRecord,
    pub span: Span,
    pub clip: AudioClip,
}

/// Cuts a clean LR record into shorter children at speech pauses.
///
/// With an alignment, cuts sit at the midpoints of inter-word gaps of at
/// least `min_pause_s` and each child carries its own words; otherwise the
/// cuts are the midpoints between segments found by [`detect_pauses`] and
/// child transcripts are empty. Children tile the parent, ids are
/// `parent#seg1`, `parent#seg2`, ...
pub fn split_record(
    record: &UtteranceRecord,
    clip: &AudioClip,
    alignment: Option<&WordAlignment>,
    params: &PauseParams,
) -> Result<Vec<SplitPiece>, SegmentError> {
    if !record.is_lr_clean() {
        return Err(SegmentError::NotLrClean(record.id.clone()));
    }
    params.validate()?;

    let (cuts, transcripts): (Vec<f64>, Vec<String>) = match alignment {
        Some(al) => {
            al.validate()?;
            if !al.matches_transcript(&record.transcript) {
                return Err(SegmentError::AlignmentMismatch(record.id.clone()));
            }
            let mut cuts = Vec::new();
            let mut groups: Vec<Vec<&str>> = alloc::vec![Vec::new()];
            for (i, w) in al.words.iter().enumerate() {
                if i > 0 {
                    let prev = &al.words[i - 1];
                    if w.start_s - prev.end_s >= params.min_pause_s {
                        cuts.push((prev.end_s + w.start_s) / 2.0);
                        groups.push(Vec::new());
                    }
                }
                groups.last_mut().unwrap().push(w.token.as_str());
            }
            (cuts, groups.iter().map(|g| g.join(" ")).collect())
        }
        None => {
            let spans = detect_pauses(clip, params)?;
            let cuts: Vec<f64> = spans
                .windows(2)
                .map(|w| (w[0].end_s + w[1].start_s) / 2.0)
                .collect();
            let n = cuts.len() + 1;
            (cuts, alloc::vec![String::new(); n])
        }
    };

    let rate = f64::from(clip.sample_rate_hz);
    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(0usize);
    bounds.extend(cuts.iter().map(|&c| libm::round(c * rate) as usize));
    bounds.push(clip.len());

    let pieces = bounds
        .windows(2)
        .zip(transcripts)
        .enumerate()
        .map(|(k, (w, transcript))| {
            let (a, b) = (w[0].min(clip.len()), w[1].min(clip.len()));
            let span = Span {
                start_s: a as f64 / rate,
                end_s: b as f64 / rate,
            };
            let id = format!("{}#seg{}", record.id, k + 1);
            let child = UtteranceRecord::clean(
                id.clone(),
                audio_file_name(&id),
                transcript,
                record.speaker.clone(),
                record.resource_class,
                span.duration_s(),
            );
            SplitPiece {
                record: child,
                span,
                clip: AudioClip::new(clip.samples[a..b].to_vec(), clip.sample_rate_hz),
            }
        })
        .collect();
    Ok(pieces)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SubsetPolicy {
    DurationAscending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetSpec {
    pub target_minutes: f64,
    #[serde(default = "default_policy")]
    pub policy: SubsetPolicy,
}

fn default_policy() -> SubsetPolicy {
    SubsetPolicy::DurationAscending
}

impl SubsetSpec {
    pub fn minutes(target_minutes: f64) -> Self {
        Self {
            target_minutes,
            policy: SubsetPolicy::DurationAscending,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subset {
    pub manifest: CorpusManifest,
    pub total_s: f64,
    /// How far the last selected record carried the total past the target.
    pub overshoot_s: f64,
}

/// Sorts clean LR records by duration (ties by id) and keeps the shortest
/// prefix whose total duration reaches the target.
pub fn build_subset(manifest: &CorpusManifest, spec: &SubsetSpec) -> Result<Subset, SegmentError> {
    if !(spec.target_minutes > 0.0) {
        return Err(SegmentError::InvalidParams(
            "target_minutes must be positive",
        ));
    }
    if let Some(r) = manifest.records.iter().find(|r| !r.is_lr_clean()) {
        return Err(SegmentError::NotLrClean(r.id.clone()));
    }
    let target = spec.target_minutes * 60.0;
    let available = manifest.total_duration_s();
    if available < target {
        return Err(SegmentError::InsufficientData {
            needed_s: target,
            available_s: available,
        });
    }
    let mut sorted: Vec<&UtteranceRecord> = manifest.records.iter().collect();
    sorted.sort_by(|a, b| {
        a.duration_s
            .total_cmp(&b.duration_s)
            .then_with(|| a.id.cmp(&b.id))
    });

    let mut total = 0.0;
    let mut records = Vec::new();
    for r in sorted {
        if total >= target {
            break;
        }
        total += r.duration_s;
        records.push(r.clone());
    }
    Ok(Subset {
        manifest: CorpusManifest {
            metadata: manifest.metadata.clone(),
            records,
        },
        total_s: total,
        overshoot_s: total - target,
    })
}
