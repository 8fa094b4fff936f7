use std::path::PathBuf;

use enhance_core::{Error as CoreError, ErrorClass};
use enhance_reader::ReaderError;
use serde::Serialize;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Reader(#[from] ReaderError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            CliError::Core(e) => e.class(),
            CliError::Reader(ReaderError::Core(e)) => e.class(),
            CliError::Reader(ReaderError::Io(_) | ReaderError::Journal(_)) => ErrorClass::Io,
            CliError::Reader(_) => ErrorClass::Validation,
            CliError::Io { .. } => ErrorClass::Io,
            CliError::Usage(_) => ErrorClass::Validation,
        }
    }

    /// 1 validation, 2 I/O, 3 degenerate statistics.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Validation => 1,
            ErrorClass::Io => 2,
            ErrorClass::Degenerate => 3,
        }
    }

    pub fn json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            error: Inner<'a>,
        }
        #[derive(Serialize)]
        struct Inner<'a> {
            class: &'a str,
            exit_code: i32,
            message: String,
        }
        let class = match self.class() {
            ErrorClass::Validation => "validation",
            ErrorClass::Io => "io",
            ErrorClass::Degenerate => "degenerate",
        };
        serde_json::to_string(&Body { error: Inner { class, exit_code: self.exit_code(), message: self.to_string() } })
            .expect("error body serializes")
    }
}
