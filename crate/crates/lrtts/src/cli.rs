//! The `lrtts` command line. Flags override values from the config file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lrtts_core::corpus::{effective_lr_count, Finding, LrCount, STABILITY_THRESHOLD};
use lrtts_core::metrics::{EvalReport, Metric};
use lrtts_core::sampler::{plan_batches, verify_plan, SamplingMode};
use lrtts_core::{active_speech_level, SpeechLevelReport};
use serde::Serialize;

use crate::config::{PipelineConfig, CONFIG_ENV};
use crate::corpus_ops::{
    augment_corpus, load_speaker_map, load_transcripts, manifest_scan, split_corpus, subset_corpus,
};
use crate::error::{io_err, Error, Result};
use crate::eval_ops::{evaluate_pairs, load_pairs, render_table};
use crate::formats::{load_plan, save_plan};
use crate::fsutil::parent_dir;
use crate::manifest::{audio_root, load_manifest, save_manifest, validate_with_audio};
use crate::pipeline::run_pipeline;
use crate::provenance::Provenance;
use crate::train_ops::{compute_targets, save_report, train_demo};
use crate::wav::load_wav;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_FATAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "lrtts",
    version,
    about = "Low-resource TTS corpus preparation, batch planning and evaluation"
)]
struct Cli {
    /// Pipeline config (TOML). Defaults to the file named by LRTTS_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ManifestArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory audio paths resolve against; defaults to the manifest's.
    #[arg(long)]
    audio_root: Option<PathBuf>,
}

impl ManifestArgs {
    fn root(&self) -> PathBuf {
        audio_root(&self.manifest, self.audio_root.as_deref())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EvalMetric {
    Mcd,
    Sim,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a manifest from a directory of WAV files.
    ManifestScan {
        #[arg(long)]
        audio_root: PathBuf,
        /// Lines of `prefix<TAB>speaker<TAB>hr|lr`.
        #[arg(long)]
        mapping: PathBuf,
        /// Lines of `id<TAB>transcript`.
        #[arg(long)]
        transcripts: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check manifest invariants and audio files.
    Validate {
        #[command(flatten)]
        input: ManifestArgs,
    },
    /// Split clean LR records at pauses.
    Split {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long)]
        out_root: PathBuf,
    },
    /// Keep the shortest clean LR records up to a duration budget.
    Subset {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long)]
        minutes: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add white-noise copies of every clean LR record.
    Augment {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long)]
        out_root: PathBuf,
        #[arg(long)]
        copies: Option<u32>,
        #[arg(long, allow_hyphen_values = true)]
        snr_db: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Sampling weight used for the effective LR count.
        #[arg(long)]
        lr_weight: Option<u32>,
    },
    /// Write a batch plan.
    Plan {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<SamplingMode>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        batches: Option<usize>,
        #[arg(long)]
        lr_weight: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a plan against a manifest and print its statistics.
    VerifyPlan {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Train the toy model over a plan and report per-speaker losses.
    TrainDemo {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Score reference/synthesized pairs.
    Eval {
        metric: EvalMetric,
        /// Lines of `id<TAB>reference<TAB>synthesized`.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the active speech level of a WAV file as one JSON line.
    SpeechLevel { wav: PathBuf },
    /// Summarize eval reports.
    Report {
        #[arg(long, value_enum, default_value = "table")]
        format: ReportFormat,
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// subset, augment, plan and train-demo from one config.
    Pipeline {
        #[arg(long)]
        out_root: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FATAL
        }
    }
}

fn report_findings(findings: &[Finding]) -> i32 {
    for f in findings {
        eprintln!("finding: {f}");
    }
    if findings.is_empty() {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    }
}

fn warn_effective(count: LrCount) {
    if count.below_threshold {
        eprintln!(
            "warning: effective LR count {} is below {STABILITY_THRESHOLD}; training may be unstable",
            count.count
        );
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializes"));
}

#[derive(Serialize)]
struct LevelLine<'a> {
    file: &'a str,
    #[serde(flatten)]
    report: SpeechLevelReport,
}

fn dispatch(cli: Cli) -> Result<i32> {
    let mut config = PipelineConfig::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::ManifestScan {
            audio_root,
            mapping,
            transcripts,
            out,
        } => {
            let rules = load_speaker_map(&mapping)?;
            let texts = match transcripts {
                Some(p) => load_transcripts(&p)?,
                None => Default::default(),
            };
            let (manifest, findings) =
                manifest_scan(&audio_root, &rules, &texts, parent_dir(&out))?;
            save_manifest(&manifest, &out)?;
            println!("{} records", manifest.len());
            Ok(report_findings(&findings))
        }
        Command::Validate { input } => {
            let manifest = load_manifest(&input.manifest)?;
            let report = validate_with_audio(&manifest, &input.root());
            println!(
                "{} records, {} findings",
                manifest.len(),
                report.findings.len()
            );
            Ok(report_findings(&report.findings))
        }
        Command::Split { input, out_root } => {
            config.validate()?;
            let manifest = load_manifest(&input.manifest)?;
            let (out, findings) = split_corpus(
                &manifest,
                &input.root(),
                &out_root,
                &config.pause,
                &Provenance::new(&config),
            )?;
            println!("{} records", out.len());
            Ok(report_findings(&findings))
        }
        Command::Subset {
            input,
            minutes,
            out,
        } => {
            let minutes = minutes
                .or(config.subset.as_ref().map(|s| s.target_minutes))
                .ok_or_else(|| Error::Config("--minutes is required".into()))?;
            config.subset = Some(crate::config::SubsetConfig {
                target_minutes: minutes,
            });
            config.validate()?;
            let manifest = load_manifest(&input.manifest)?;
            let out_m = subset_corpus(
                &manifest,
                &input.root(),
                &out,
                minutes,
                &Provenance::new(&config),
            )?;
            println!("{} records", out_m.len());
            Ok(EXIT_OK)
        }
        Command::Augment {
            input,
            out_root,
            copies,
            snr_db,
            seed,
            lr_weight,
        } => {
            let spec = &mut config.augment;
            spec.n_copies = copies.unwrap_or(spec.n_copies);
            spec.snr_db = snr_db.unwrap_or(spec.snr_db);
            spec.base_seed = seed.unwrap_or(spec.base_seed);
            let weight = lr_weight.unwrap_or(if config.sampler.mode.is_weighted() {
                config.sampler.lr_weight
            } else {
                1
            });
            if weight == 0 {
                return Err(Error::Config("--lr-weight must be at least 1".into()));
            }
            config.validate()?;
            let manifest = load_manifest(&input.manifest)?;
            let outcome = augment_corpus(
                &manifest,
                &config.augment,
                &input.root(),
                &out_root,
                weight,
                &Provenance::new(&config),
            )?;
            println!(
                "{} records, effective LR count {}, {} clipped samples",
                outcome.manifest.len(),
                outcome.effective.count,
                outcome.clipped_samples
            );
            warn_effective(outcome.effective);
            for s in &outcome.skipped {
                eprintln!("skipped: {}: {}", s.id, s.reason);
            }
            Ok(if outcome.skipped.is_empty() {
                EXIT_OK
            } else {
                EXIT_FINDINGS
            })
        }
        Command::Plan {
            manifest,
            out,
            mode,
            batch_size,
            batches,
            lr_weight,
            seed,
        } => {
            let s = &mut config.sampler;
            s.mode = mode.unwrap_or(s.mode);
            s.batch_size = batch_size.unwrap_or(s.batch_size);
            s.n_batches = batches.unwrap_or(s.n_batches);
            s.lr_weight = lr_weight.unwrap_or(s.lr_weight);
            s.seed = seed.unwrap_or(s.seed);
            config.validate()?;
            let m = load_manifest(&manifest)?;
            let plan = plan_batches(&m, &config.sampler)?;
            save_plan(&plan, &out)?;
            let weight = if config.sampler.mode.is_weighted() {
                config.sampler.lr_weight
            } else {
                1
            };
            warn_effective(effective_lr_count(&m, weight));
            println!(
                "{} batches, fingerprint {}",
                plan.batches.len(),
                plan.fingerprint
            );
            Ok(EXIT_OK)
        }
        Command::VerifyPlan { manifest, plan } => {
            let m = load_manifest(&manifest)?;
            let report = verify_plan(&load_plan(&plan)?, &m);
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("serializes")
            );
            for v in &report.violations {
                eprintln!("violation: {v}");
            }
            Ok(if report.is_clean() {
                EXIT_OK
            } else {
                EXIT_FINDINGS
            })
        }
        Command::TrainDemo {
            input,
            plan,
            epochs,
            lr,
            seed,
            report,
        } => {
            let t = &mut config.train;
            t.epochs = epochs.unwrap_or(t.epochs);
            t.learning_rate = lr.unwrap_or(t.learning_rate);
            t.seed = seed.unwrap_or(t.seed);
            config.validate()?;
            let m = load_manifest(&input.manifest)?;
            let plan = load_plan(&plan)?;
            let targets = compute_targets(&m, &input.root(), &config.features, config.eval.order)?;
            let r = train_demo(&m, &plan, &targets, &config.train, &config.hash())?;
            save_report(&r, &report)?;
            print!("{}", r.table());
            Ok(EXIT_OK)
        }
        Command::Eval { metric, pairs, out } => {
            config.validate()?;
            let metric = match metric {
                EvalMetric::Mcd => Metric::Mcd,
                EvalMetric::Sim => Metric::CosSim,
            };
            let report =
                evaluate_pairs(metric, &load_pairs(&pairs)?, &config.features, &config.eval)?;
            match out {
                Some(p) => save_report(&report, &p)?,
                None => println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("serializes")
                ),
            }
            eprintln!(
                "{} scored, {} failed: {}",
                report.per_item.len(),
                report.failures.len(),
                report.summary.display(3)
            );
            for f in &report.failures {
                eprintln!("failed: {}: {}", f.id, f.reason);
            }
            Ok(if report.failures.is_empty() {
                EXIT_OK
            } else {
                EXIT_FINDINGS
            })
        }
        Command::SpeechLevel { wav } => {
            let clip = load_wav(&wav)?;
            let report = active_speech_level(&clip)?;
            print_json(&LevelLine {
                file: &wav.to_string_lossy(),
                report,
            });
            Ok(EXIT_OK)
        }
        Command::Report { format, reports } => {
            let mut rows = Vec::new();
            for p in &reports {
                let text = std::fs::read_to_string(p).map_err(io_err(p))?;
                let r: EvalReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
                    path: p.clone(),
                    line: e.line(),
                    message: e.to_string(),
                })?;
                rows.push((label(p), r));
            }
            match format {
                ReportFormat::Table => print!("{}", render_table(&rows)),
                ReportFormat::Json => {
                    let summaries: Vec<_> = rows
                        .iter()
                        .map(|(l, r)| serde_json::json!({"model": l, "metric": r.metric, "summary": r.summary}))
                        .collect();
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&summaries).expect("serializes")
                    );
                }
            }
            Ok(EXIT_OK)
        }
        Command::Pipeline { out_root } => {
            if cli.config.is_none() && std::env::var_os(CONFIG_ENV).is_none() {
                return Err(Error::Config(format!(
                    "pipeline needs --config or {CONFIG_ENV}"
                )));
            }
            let outcome = run_pipeline(&config, out_root.as_deref())?;
            println!(
                "{} records after augmentation, effective LR count {}",
                outcome.augment.manifest.len(),
                outcome.effective.count
            );
            warn_effective(outcome.effective);
            print!("{}", outcome.report.table());
            Ok(if outcome.augment.skipped.is_empty() {
                EXIT_OK
            } else {
                EXIT_FINDINGS
            })
        }
    }
}

fn label(path: &Path) -> String {
    path.file_stem()
        .unwrap_or_default()
        .to_string_lossy()
        .into_owned()
}
