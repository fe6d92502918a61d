//! File formats, pipeline stages and the command line for `lrtts-core`.

pub mod cli;
pub mod config;
pub mod corpus_ops;
pub mod error;
pub mod eval_ops;
pub mod formats;
pub mod fsutil;
pub mod manifest;
pub mod pipeline;
pub mod provenance;
pub mod train_ops;
pub mod wav;

pub use error::{Error, Result};
