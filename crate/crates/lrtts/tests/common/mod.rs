#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use lrtts::manifest::save_manifest;
use lrtts::wav::write_wav;
use lrtts_core::corpus::{CorpusManifest, ResourceClass, SpeakerId, UtteranceRecord};
use lrtts_core::rng::CounterRng;
use lrtts_core::AudioClip;

pub const RATE: u32 = 16000;

/// Voiced-looking bursts (harmonic stack under a raised-sine envelope, a
/// little breath noise) separated by short pauses, filling `seconds`.
pub fn speech_like(seed: u64, seconds: f64) -> AudioClip {
    let mut rng = CounterRng::new(seed);
    let n = (seconds * f64::from(RATE)).round() as usize;
    let mut out = Vec::with_capacity(n);
    let lead = (0.15 * f64::from(RATE)) as usize;
    out.resize(lead.min(n), 0.0);
    while out.len() < n {
        let len = ((rng.uniform(0.25, 0.6) * f64::from(RATE)) as usize).min(n - out.len());
        let f0 = rng.uniform(90.0, 240.0);
        let amp = rng.uniform(0.15, 0.35);
        for i in 0..len {
            let t = i as f64 / f64::from(RATE);
            let env = (PI * i as f64 / len as f64).sin();
            let voiced: f64 = (1..=5)
                .map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64)
                .sum();
            out.push(amp * env * (0.6 * voiced + 0.05 * rng.normal()));
        }
        let gap = ((rng.uniform(0.08, 0.3) * f64::from(RATE)) as usize).min(n - out.len());
        out.extend(std::iter::repeat_n(0.0, gap));
    }
    AudioClip::new(out, RATE)
}

pub struct CorpusSpec {
    pub hr_speakers: Vec<&'static str>,
    pub hr_per_speaker: usize,
    pub lr_durations: Vec<f64>,
    pub seed: u64,
}

/// Writes `dir/audio/*.wav` and `dir/manifest.jsonl`; returns the manifest path.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> PathBuf {
    let mut records = Vec::new();
    let mut k = spec.seed * 100_000;
    let mut add =
        |id: String, speaker: &str, class: ResourceClass, seconds: f64, transcript: &str| {
            k += 1;
            let clip = speech_like(k, seconds);
            let rel = format!("audio/{id}.wav");
            write_wav(&clip, &dir.join(&rel)).unwrap();
            records.push(UtteranceRecord::clean(
                id,
                rel,
                transcript,
                SpeakerId::new(speaker).unwrap(),
                class,
                clip.duration_s(),
            ));
        };
    for s in &spec.hr_speakers {
        for i in 0..spec.hr_per_speaker {
            add(
                format!("{s}_{i:03}"),
                s,
                ResourceClass::HighResource,
                1.0 + 0.25 * (i % 4) as f64,
                "hello there",
            );
        }
    }
    for (i, &d) in spec.lr_durations.iter().enumerate() {
        add(
            format!("lr_{i:03}"),
            "lr",
            ResourceClass::LowResource,
            d,
            "a short sentence",
        );
    }
    let m = CorpusManifest::new(BTreeMap::new(), records).unwrap();
    let path = dir.join("manifest.jsonl");
    save_manifest(&m, &path).unwrap();
    path
}

/// 17 LR clips totalling a little over a minute.
pub fn one_minute_corpus(dir: &Path) -> PathBuf {
    let lr_durations = (0..17).map(|i| 3.3 + 0.05 * i as f64).collect();
    write_corpus(
        dir,
        &CorpusSpec {
            hr_speakers: vec!["ljs", "tcm"],
            hr_per_speaker: 12,
            lr_durations,
            seed: 1,
        },
    )
}

pub fn pipeline_config(
    manifest: &Path,
    copies: u32,
    mode: &str,
    weight: u32,
    minutes: Option<f64>,
) -> String {
    let subset = minutes.map_or(String::new(), |m| {
        format!("[subset]\ntarget_minutes = {m}\n\n")
    });
    format!(
        r#"[input]
manifest = "{}"

[features]
sample_rate_hz = {RATE}

[augment]
n_copies = {copies}
snr_db = 20.0
base_seed = 7

{subset}[sampler]
batch_size = 8
mode = "{mode}"
lr_weight = {weight}
seed = 3
n_batches = 200

[train]
epochs = 1
learning_rate = 0.05
seed = 5
"#,
        manifest.display()
    )
}

/// Every file under `root`, relative path to contents.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
