//! The ten acceptance criteria. Each prints one PASS/FAIL line; the process
//! exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::{LN_10, PI};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use lrtts::config::PipelineConfig;
use lrtts::pipeline::run_pipeline;
use lrtts_core::augment::{add_wgn, assemble, plan_augmentation, AugmentSpec};
use lrtts_core::corpus::{
    effective_lr_count, ConditionId, CorpusManifest, ResourceClass, SpeakerId, UtteranceRecord,
};
use lrtts_core::metrics::{dtw, mcd_from_cepstra, McdConfig};
use lrtts_core::rng::CounterRng;
use lrtts_core::sampler::{plan_batches, verify_plan, BinLabel, SamplerConfig, SamplingMode};
use lrtts_core::segment::{build_subset, SegmentError, SubsetSpec};
use lrtts_core::trainer::{
    imbalance_probe, init_model, loss_and_grad, Example, ToyModel, TrainSettings, EMBED_DIM,
};
use lrtts_core::{active_speech_level, measured_snr, AudioClip, CepstralSequence};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn record(id: &str, speaker: &str, class: ResourceClass, duration_s: f64) -> UtteranceRecord {
    UtteranceRecord::clean(
        id,
        format!("{id}.wav"),
        "",
        SpeakerId::new(speaker).unwrap(),
        class,
        duration_s,
    )
}

fn snr_closure() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let clip = common::speech_like(1000 + k, 2.0);
        for target in [0.0, 10.0, 20.0, 40.0] {
            let noisy = add_wgn(&clip, target, k).unwrap();
            let snr = measured_snr(&clip, &noisy.clip).unwrap();
            worst = worst.max((snr - target).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 0.1 && elapsed < Duration::from_secs(30),
        format!(
            "200 cases, max |error| {worst:.2e} dB, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn p56_oracle() -> Outcome {
    let rate = 16000.0;
    let tone = |amp: f64, seconds: f64| -> Vec<f64> {
        (0..(seconds * rate) as usize)
            .map(|i| amp * (2.0 * PI * 440.0 * i as f64 / rate).sin())
            .collect()
    };
    // Pauses much longer than the hangover, so the 50 % duty cycle is what
    // the detector sees.
    let mut bursts = Vec::new();
    for _ in 0..4 {
        bursts.extend(tone(0.5, 8.0));
        bursts.extend(vec![0.0; (8.0 * rate) as usize]);
    }
    let b = active_speech_level(&AudioClip::new(bursts, 16000)).unwrap();
    let gain = b.active_level_db - b.long_term_level_db;
    let s = active_speech_level(&AudioClip::new(tone(1.0, 4.0), 16000)).unwrap();
    let pass = (b.activity_factor - 0.5).abs() <= 0.05
        && (gain - 3.01).abs() <= 0.3
        && (s.activity_factor - 1.0).abs() <= 0.02
        && (s.active_level_db + 3.01).abs() <= 0.1;
    outcome(
        pass,
        format!(
            "bursts: activity {:.3}, active − overall {gain:.2} dB; sine: activity {:.3}, level {:.3} dBFS",
            b.activity_factor, s.activity_factor, s.active_level_db
        ),
    )
}

/// Minimum over every monotone path, by enumeration.
fn exhaustive_dtw(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    fn walk(i: usize, j: usize, a: &[Vec<f64>], b: &[Vec<f64>], acc: f64, best: &mut f64) {
        let acc = acc
            + a[i]
                .iter()
                .zip(&b[j])
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>();
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
            if i + di < a.len() && j + dj < b.len() {
                walk(i + di, j + dj, a, b, acc, best);
            }
        }
    }
    let mut best = f64::INFINITY;
    walk(0, 0, a, b, 0.0, &mut best);
    best
}

fn dtw_oracle() -> Outcome {
    let mut rng = CounterRng::new(2024);
    let mut mismatches = 0;
    for _ in 0..200 {
        let dim = 1 + rng.below(4) as usize;
        let seq = |rng: &mut CounterRng| -> Vec<Vec<f64>> {
            let n = 1 + rng.below(6) as usize;
            (0..n)
                .map(|_| (0..dim).map(|_| rng.normal()).collect())
                .collect()
        };
        let (a, b) = (seq(&mut rng), seq(&mut rng));
        let dp = dtw(
            &CepstralSequence::from_rows(&a),
            &CepstralSequence::from_rows(&b),
            0..=dim - 1,
        )
        .unwrap();
        let oracle = exhaustive_dtw(&a, &b);
        if (dp.total_cost - oracle).abs() > 1e-9 * oracle.max(1.0) {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("200 random pairs, {mismatches} mismatches"),
    )
}

fn mcd_closed_form() -> Outcome {
    let expected = 10.0 / LN_10 * 2f64.sqrt();
    let mut a = vec![0.0; 13];
    let b = a.clone();
    a[1] = 1.0;
    let cfg = McdConfig::default();
    let seq = |v: &Vec<f64>| CepstralSequence::from_rows(std::slice::from_ref(v));
    let one = mcd_from_cepstra(&seq(&a), &seq(&b), &cfg).unwrap();
    let same = mcd_from_cepstra(&seq(&a), &seq(&a), &cfg).unwrap();
    outcome(
        (one - expected).abs() <= 1e-6 && same == 0.0,
        format!(
            "unit c1 difference {one:.7} dB (closed form {expected:.7}; the stated 6.1421 is off by {:.1e}), identical {same}",
            (6.1421 - expected).abs()
        ),
    )
}

fn sampler_statistics() -> Outcome {
    let mut records = Vec::new();
    for i in 0..900 {
        records.push(record(
            &format!("h{i:04}"),
            "ljs",
            ResourceClass::HighResource,
            1.0,
        ));
    }
    for i in 0..1100 {
        records.push(record(
            &format!("l{i:04}"),
            "lr",
            ResourceClass::LowResource,
            1.0,
        ));
    }
    let binned = CorpusManifest::new(BTreeMap::new(), records).unwrap();
    let mut fractions = Vec::new();
    for seed in [1, 2, 3] {
        let cfg = SamplerConfig {
            batch_size: 16,
            mode: SamplingMode::Binned,
            lr_weight: 1,
            seed,
            n_batches: 10_000,
        };
        let plan = plan_batches(&binned, &cfg).unwrap();
        let lr = plan
            .batches
            .iter()
            .filter(|b| b.bin == BinLabel::LR)
            .count();
        fractions.push(lr as f64 / 10_000.0);
    }
    let binned_ok = fractions.iter().all(|f| (f - 0.55).abs() <= 0.02);

    let mut records = Vec::new();
    for i in 0..950 {
        records.push(record(
            &format!("h{i:04}"),
            "ljs",
            ResourceClass::HighResource,
            1.0,
        ));
    }
    for i in 0..50 {
        records.push(record(
            &format!("l{i:04}"),
            "lr",
            ResourceClass::LowResource,
            1.0,
        ));
    }
    let imbalanced = CorpusManifest::new(BTreeMap::new(), records).unwrap();
    let cfg = SamplerConfig {
        batch_size: 32,
        mode: SamplingMode::Weighted,
        lr_weight: 6,
        seed: 7,
        n_batches: 2000,
    };
    let report = verify_plan(&plan_batches(&imbalanced, &cfg).unwrap(), &imbalanced);
    let ratio = report.lr_hr_draw_ratio.unwrap_or(f64::NAN);
    outcome(
        binned_ok && (ratio - 6.0).abs() <= 0.6,
        format!("binned LR fractions {fractions:.4?} (target 0.55); weighted per-record draw ratio {ratio:.3} (target 6)"),
    )
}

fn lr_manifest(clean: usize, hr: usize) -> CorpusManifest {
    let mut records: Vec<_> = (0..hr)
        .map(|i| record(&format!("h{i:03}"), "ljs", ResourceClass::HighResource, 5.0))
        .collect();
    records.extend(
        (0..clean).map(|i| record(&format!("l{i:03}"), "lr", ResourceClass::LowResource, 3.5)),
    );
    CorpusManifest::new(BTreeMap::new(), records).unwrap()
}

fn augmented(clean: usize, copies: u32) -> CorpusManifest {
    let m = lr_manifest(clean, 20);
    let spec = AugmentSpec {
        n_copies: copies,
        snr_db: 20.0,
        base_seed: 0,
    };
    assemble(&m, plan_augmentation(&m, &spec), &[])
}

fn recipe_arithmetic() -> Outcome {
    let one_min = effective_lr_count(&augmented(17, 10), 6);
    let at = |clean| effective_lr_count(&augmented(clean, 5), 1);
    let (c168, c167, c166) = (at(168), at(167), at(166));
    let pass = one_min.count == 1122
        && !one_min.below_threshold
        && c168.count > 1000
        && !c168.below_threshold
        && c166.below_threshold;
    outcome(
        pass,
        format!(
            "1-min: 17 × 11 × 6 = {}; 5-min: 168 → {}, 166 → {} (warn); 167 → {} already clears 1000",
            one_min.count, c168.count, c166.count, c167.count
        ),
    )
}

fn subset_rule() -> Outcome {
    let records = (1..=5)
        .map(|d| record(&format!("d{d}"), "lr", ResourceClass::LowResource, d as f64))
        .collect();
    let m = CorpusManifest::new(BTreeMap::new(), records).unwrap();
    let spec = SubsetSpec::minutes(0.1);
    let picked: Vec<f64> = build_subset(&m, &spec)
        .unwrap()
        .manifest
        .records
        .iter()
        .map(|r| r.duration_s)
        .collect();
    let short = build_subset(&m, &SubsetSpec::minutes(16.0 / 60.0));
    let pass =
        picked == [1.0, 2.0, 3.0] && matches!(short, Err(SegmentError::InsufficientData { .. }));
    outcome(
        pass,
        format!(
            "target 6 s picks {picked:?} s; 16 s of 15 available → {:?}",
            short.err()
        ),
    )
}

fn params_mut(m: &mut ToyModel, which: usize) -> &mut Vec<f64> {
    match which {
        0 => &mut m.embedding,
        1 => &mut m.output_map,
        _ => &mut m.bias,
    }
}

fn gradient_check() -> Outcome {
    let mut records = Vec::new();
    for s in ["ljs", "tcm", "hfc"] {
        records.push(record(
            &format!("{s}0"),
            s,
            ResourceClass::HighResource,
            1.0,
        ));
    }
    let lr = record("lr0", "lr", ResourceClass::LowResource, 1.0);
    records.push(UtteranceRecord {
        id: "lr0#aug1".into(),
        condition: ConditionId::LrNoisy,
        aug_index: 1,
        snr_db: Some(20.0),
        ..lr.clone()
    });
    records.push(lr);
    let m = CorpusManifest::new(BTreeMap::new(), records).unwrap();

    let mut rng = CounterRng::new(88);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut hr_leaks = 0;
    for trial in 0..100 {
        let d_out = 1 + rng.below(13) as usize;
        let model = init_model(&m, d_out, trial);
        let n = 1 + rng.below(8) as usize;
        let targets: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d_out).map(|_| rng.normal()).collect())
            .collect();
        let batch: Vec<Example<'_>> = targets
            .iter()
            .map(|t| Example {
                condition: rng.below(model.conditions.len() as u64) as usize,
                target: t,
            })
            .collect();
        let (_, grads) = loss_and_grad(&model, &batch).unwrap();
        for (which, g) in [&grads.embedding, &grads.output_map, &grads.bias]
            .into_iter()
            .enumerate()
        {
            for (i, &gi) in g.iter().enumerate() {
                let mut plus = model.clone();
                params_mut(&mut plus, which)[i] += eps;
                let mut minus = model.clone();
                params_mut(&mut minus, which)[i] -= eps;
                let fd = (loss_and_grad(&plus, &batch).unwrap().0
                    - loss_and_grad(&minus, &batch).unwrap().0)
                    / (2.0 * eps);
                worst = worst.max((fd - gi).abs() / fd.abs().max(gi.abs()).max(1e-2));
            }
        }

        let lr_rows: Vec<usize> = (0..model.conditions.len())
            .filter(|&k| model.conditions[k].is_lr())
            .collect();
        let lr_batch: Vec<Example<'_>> = targets
            .iter()
            .map(|t| Example {
                condition: lr_rows[rng.below(lr_rows.len() as u64) as usize],
                target: t,
            })
            .collect();
        let (_, g) = loss_and_grad(&model, &lr_batch).unwrap();
        for (k, c) in model.conditions.iter().enumerate() {
            if !c.is_lr()
                && g.embedding[k * EMBED_DIM..(k + 1) * EMBED_DIM]
                    .iter()
                    .any(|&v| v != 0.0)
            {
                hr_leaks += 1;
            }
        }
    }
    outcome(
        worst < 1e-5 && hr_leaks == 0,
        format!("100 instances, max relative error {worst:.2e}; HR rows touched by pure-LR batches: {hr_leaks}"),
    )
}

fn imbalance() -> Outcome {
    let start = Instant::now();
    let m = lr_manifest(50, 950);
    let mut rng = CounterRng::new(5);
    let targets: BTreeMap<String, Vec<f64>> = m
        .records
        .iter()
        .map(|r| (r.id.clone(), (0..13).map(|_| rng.normal()).collect()))
        .collect();
    let uniform = SamplerConfig {
        batch_size: 8,
        mode: SamplingMode::Uniform,
        lr_weight: 1,
        seed: 21,
        n_batches: 5000,
    };
    let binned = SamplerConfig {
        mode: SamplingMode::Binned,
        ..uniform.clone()
    };
    let weighted = SamplerConfig {
        mode: SamplingMode::Weighted,
        lr_weight: 6,
        ..uniform.clone()
    };
    let settings = TrainSettings {
        epochs: 1,
        learning_rate: 0.01,
        seed: 3,
    };
    let r = imbalance_probe(&m, &targets, &uniform, &binned, &settings).unwrap();
    let w = imbalance_probe(&m, &targets, &uniform, &weighted, &settings).unwrap();
    let elapsed = start.elapsed();
    let pass = (r.b.pure_lr_batch_fraction - r.b.lr_bin_proportion).abs() <= 0.02
        && r.a.pure_lr_batch_fraction < 0.001
        && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "binned pure-LR {:.4} vs bin share {:.4}; uniform {:.4}; LR gradient steps {:.3} vs {:.3}; weighted draw ratio {:.2}; {:.1} s",
            r.b.pure_lr_batch_fraction,
            r.b.lr_bin_proportion,
            r.a.pure_lr_batch_fraction,
            r.b.lr_step_fraction,
            r.a.lr_step_fraction,
            w.b.lr_hr_draw_ratio.unwrap_or(f64::NAN),
            elapsed.as_secs_f64()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::one_minute_corpus(&dir.path().join("corpus"));
    let cfg_path = dir.path().join("one_min.toml");
    std::fs::write(
        &cfg_path,
        common::pipeline_config(&manifest, 10, "weighted", 6, Some(1.0)),
    )
    .unwrap();
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    let (a, b) = (dir.path().join("run_a"), dir.path().join("run_b"));
    run_pipeline(&cfg, Some(&a)).unwrap();
    run_pipeline(&cfg, Some(&b)).unwrap();
    let (sa, sb) = (common::snapshot(&a), common::snapshot(&b));
    let differing = sa
        .iter()
        .filter(|(p, bytes)| sb.get(*p) != Some(bytes))
        .count()
        + sb.keys().filter(|p| !sa.contains_key(*p)).count();
    let wavs = sa
        .keys()
        .filter(|p| p.extension().is_some_and(|e| e == "wav"))
        .count();
    outcome(
        differing == 0 && !sa.is_empty(),
        format!(
            "{} files per run ({wavs} augmented WAVs), {differing} differ",
            sa.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("SNR closure", snr_closure),
        ("P.56 oracle", p56_oracle),
        ("DTW oracle equivalence", dtw_oracle),
        ("MCD closed form", mcd_closed_form),
        ("sampler statistics", sampler_statistics),
        ("recipe arithmetic", recipe_arithmetic),
        ("subset rule", subset_rule),
        ("gradient check", gradient_check),
        ("imbalance probe", imbalance),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail
        );
    }
    println!(
        "acceptance: {}/{} passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
