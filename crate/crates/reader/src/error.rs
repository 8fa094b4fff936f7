use thiserror::Error;

pub type Result<T, E = ReaderError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ReaderError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("session is complete")]
    Complete,
    #[error("session is not complete ({answered} of {total} answered)")]
    Incomplete { answered: usize, total: usize },
    #[error("out of order: token is for position {got}, session is at position {expected}")]
    Ordering { expected: usize, got: usize },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("render error: {0}")]
    Render(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("journal error: {0}")]
    Journal(String),
    #[error(transparent)]
    Core(#[from] enhance_core::Error),
}

impl ReaderError {
    /// Stable machine-readable code used in JSON error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ReaderError::NotFound(_) => "not_found",
            ReaderError::Complete => "complete",
            ReaderError::Incomplete { .. } => "incomplete",
            ReaderError::Ordering { .. } => "ordering",
            ReaderError::Conflict(_) => "conflict",
            ReaderError::Capacity(_) => "capacity",
            ReaderError::BadRequest(_) => "bad_request",
            ReaderError::Unauthorized => "unauthorized",
            ReaderError::OutOfRange(_) => "out_of_range",
            ReaderError::Render(_) => "render",
            ReaderError::Io(_) => "io",
            ReaderError::Journal(_) => "journal",
            ReaderError::Core(_) => "internal",
        }
    }

    pub(crate) fn io(what: &std::path::Path, e: std::io::Error) -> Self {
        ReaderError::Journal(format!("{}: {e}", what.display()))
    }
}
