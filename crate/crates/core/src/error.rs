use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: file contains no samples")]
    EmptyFile { path: PathBuf },

    #[error("{context}: need at least {required} samples, got {actual}")]
    TooShort {
        context: String,
        required: usize,
        actual: usize,
    },

    #[error("mixed sample rates in dataset: {first} Hz and {other} Hz")]
    MixedSampleRate { first: u32, other: u32 },

    #[error("duplicate subject id `{0}`")]
    DuplicateSubject(String),

    #[error("channel `{0}` has no non-missing values")]
    ChannelAllMissing(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("leakage guard: parameters fitted on `{found}` but this step requires `{expected}`")]
    Leakage { expected: String, found: String },

    #[error("training data contains a single class; both normal and abnormal are required")]
    SingleClass,

    #[error("logistic regression diverged at epoch {epoch} (non-finite loss); lower the learning rate")]
    Diverged { epoch: usize },

    #[error("SMO did not converge after {iterations} sweeps; largest KKT violation {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
