use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the matching, verification and retrieval pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sample at ({x}, {y}) lies outside the {width}x{height} grid")]
    InvalidSample {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("channel mismatch: {left} vs {right}")]
    ChannelMismatch { left: usize, right: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no model: {0}")]
    NoModel(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("warp sampling rejected {attempts} candidates (magnitude {magnitude})")]
    WarpRejected { attempts: usize, magnitude: f64 },

    #[error("insufficient source images: need {needed}, have {available}")]
    InsufficientSources { needed: usize, available: usize },
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from user-supplied data or configuration
    /// rather than from the filesystem.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
