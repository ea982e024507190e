use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed array file at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("array integrity error: {0}")]
    Integrity(String),

    #[error("results log sequencing error: expected round {expected}, got {got}")]
    Sequencing { expected: usize, got: usize },

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("budget error: {0}")]
    Budget(String),

    #[error("strategy `{strategy}` violated the query contract: {message}")]
    ContractViolation { strategy: String, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("training diverged at epoch {epoch} (lr = {lr}): non-finite loss")]
    Divergence { epoch: usize, lr: f64 },

    #[error("class weighting error: {0}")]
    Weighting(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("initialization error: {0}")]
    Initialization(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("checkpoint does not match config: {0}")]
    CheckpointMismatch(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("missing input files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFiles(Vec<PathBuf>),
}

/// Coarse error classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Contract,
    Divergence,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Contract => 4,
            ErrorKind::Divergence => 5,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ErrorKind::Config => "E_CONFIG",
            ErrorKind::Data => "E_DATA",
            ErrorKind::Contract => "E_CONTRACT",
            ErrorKind::Divergence => "E_DIVERGENCE",
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Spec(_)
            | Error::Config(_)
            | Error::Budget(_)
            | Error::CheckpointMismatch(_) => ErrorKind::Config,
            Error::ContractViolation { .. } => ErrorKind::Contract,
            Error::Divergence { .. } => ErrorKind::Divergence,
            _ => ErrorKind::Data,
        }
    }
}
