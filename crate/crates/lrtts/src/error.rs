use std::io;
use std::path::{Path, PathBuf};

use lrtts_core::augment::AugmentError;
use lrtts_core::corpus::CorpusError;
use lrtts_core::dsp::DspError;
use lrtts_core::level::LevelError;
use lrtts_core::metrics::MetricsError;
use lrtts_core::sampler::SamplerError;
use lrtts_core::segment::SegmentError;
use lrtts_core::trainer::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: unsupported format: {details}", path.display())]
    UnsupportedFormat { path: PathBuf, details: String },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Manifest { path: PathBuf, source: CorpusError },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
