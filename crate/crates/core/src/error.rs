use std::path::PathBuf;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("frozen parameters changed: {0}")]
    Freeze(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("incomparable reports: {0}")]
    Mismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable identifier used in machine-readable error lines.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::Numerical(_) => "numerical",
            Error::Checkpoint(e) => e.class(),
            Error::Freeze(_) => "freeze",
            Error::Divergence(_) => "divergence",
            Error::Mismatch(_) => "mismatch",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("shape mismatch for `{name}`: expected {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

impl CheckpointError {
    pub fn class(&self) -> &'static str {
        match self {
            CheckpointError::BadMagic => "checkpoint-magic",
            CheckpointError::Version { .. } => "checkpoint-version",
            CheckpointError::Truncated => "checkpoint-truncated",
            CheckpointError::Checksum => "checkpoint-checksum",
            CheckpointError::Malformed(_) => "checkpoint-malformed",
            CheckpointError::Shape { .. } => "checkpoint-shape",
        }
    }
}
