use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Io,
    Degenerate,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("truncated data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("grids are not aligned: {left} vs {right}")]
    Alignment { left: String, right: String },
    #[error("interpolation mode error: {0}")]
    Mode(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("sample size error: need at least {needed}, got {got}")]
    SampleSize { needed: usize, got: usize },
    #[error("complete separation detected (|beta| = {beta:.3})")]
    Separation { beta: f64 },
    #[error("empty cohort")]
    EmptyCohort,
    #[error("no lesion: category requires at least one connected component")]
    NoLesion,
    #[error("bounds error: {0}")]
    Bounds(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Degenerate(_)
            | Error::SampleSize { .. }
            | Error::Separation { .. }
            | Error::EmptyCohort
            | Error::NoLesion => ErrorClass::Degenerate,
            _ => ErrorClass::Validation,
        }
    }
}
