//! TOML pipeline configuration.

use std::path::{Path, PathBuf};

use lrtts_core::augment::AugmentSpec;
use lrtts_core::metrics::McdConfig;
use lrtts_core::sampler::SamplerConfig;
use lrtts_core::segment::PauseParams;
use lrtts_core::trainer::TrainSettings;
use lrtts_core::FeatureParams;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::fsutil::{parent_dir, sha256_hex};

/// Names the config file used when `--config` is not given.
pub const CONFIG_ENV: &str = "LRTTS_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    /// Relative paths resolve against the config file's directory.
    pub manifest: Option<PathBuf>,
    pub audio_root: Option<PathBuf>,
    pub out_root: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetConfig {
    pub target_minutes: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub features: FeatureParams,
    pub augment: AugmentSpec,
    pub pause: PauseParams,
    /// No subset step when absent.
    pub subset: Option<SubsetConfig>,
    pub sampler: SamplerConfig,
    pub train: TrainSettings,
    pub eval: McdConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a file and makes its input paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = parent_dir(path);
        for p in [
            &mut cfg.input.manifest,
            &mut cfg.input.audio_root,
            &mut cfg.input.out_root,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// `explicit`, else the file named by `LRTTS_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.augment.validate()?;
        self.pause.validate()?;
        self.sampler.validate()?;
        if let Some(s) = &self.subset {
            if !(s.target_minutes.is_finite() && s.target_minutes > 0.0) {
                return Err(Error::Config(
                    "subset.target_minutes must be positive".into(),
                ));
            }
        }
        if !(self.train.learning_rate.is_finite() && self.train.learning_rate >= 0.0) {
            return Err(Error::Config(
                "train.learning_rate must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// TOML rendering of the processing parameters. Input paths are left out
    /// so the same recipe hashes the same wherever it runs.
    pub fn resolved_toml(&self) -> String {
        let mut c = self.clone();
        c.input = InputConfig::default();
        toml::to_string(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.resolved_toml().as_bytes())
    }
}
