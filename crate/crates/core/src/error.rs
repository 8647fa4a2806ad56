use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("attention overflow in layer {layer}")]
    AttentionOverflow { layer: usize },

    #[error("no tiles")]
    NoTiles,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: cannot decode image: {message}")]
    Image { path: PathBuf, message: String },

    #[error("input format: {0}")]
    Format(String),

    #[error("{path}: checksum verification failed")]
    Checksum { path: PathBuf },

    #[error("shape mismatch for tensor `{tensor}`: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        tensor: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("missing record for case `{0}`")]
    MissingRecord(String),

    #[error("case ids do not align; orphaned ids: {0:?}")]
    OrphanedIds(Vec<String>),
}

/// Process exit codes for the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i32)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    InputFormat = 2,
    Numerical = 3,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn dims(what: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            actual,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Error::InvalidArgument(_) => ExitCode::Usage,
            Error::NonFinite(_) | Error::AttentionOverflow { .. } => ExitCode::Numerical,
            _ => ExitCode::InputFormat,
        }
    }
}
