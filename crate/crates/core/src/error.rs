use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("invalid extraction parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: left has {left} components, right has {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("{measure} is undefined: {reason}")]
    UndefinedMeasure {
        measure: &'static str,
        reason: &'static str,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("training set has no validity scores; run validate_samples first")]
    NotValidated,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported index version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("index file is truncated: {0}")]
    Truncated(String),

    #[error("entry {id}: vector has {found} values, header declares {expected}")]
    EntryDimension {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
