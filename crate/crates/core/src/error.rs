use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is at or below the zero threshold")]
    ZeroVector { norm: f64 },

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is not symmetric (max relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite even with jitter {max_jitter:e}")]
    NotDecomposable { max_jitter: f64 },

    #[error("no enrollment records supplied")]
    EmptyEnrollment,

    #[error("enrollment records mix {field}: {a} vs {b}")]
    MixedEnrollment {
        field: &'static str,
        a: String,
        b: String,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("unknown trial label {label:?} on line {line}")]
    UnknownLabel { label: String, line: usize },

    #[error("unknown id {0:?}")]
    UnknownId(String),

    #[error("duplicate record {0:?}")]
    DuplicateRecord(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no voice profile for speaker {0:?}")]
    MissingSpeaker(String),

    #[error("model mismatch: expected {expected:?}, got {got:?}")]
    ModelMismatch { expected: String, got: String },

    #[error("speaker order differs between weight matrices")]
    SpeakerOrderMismatch,

    #[error("invalid layer dimensions: {0}")]
    BadDims(String),

    #[error("activation cache does not match the network")]
    StaleCache,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("speaker {0:?} appears in both the batch and the negative bank")]
    DisjointnessViolation(String),

    #[error("aligner variant mismatch: expected {expected}, got {got}")]
    VariantMismatch { expected: String, got: String },

    #[error("trial set needs at least one target and one imposter trial")]
    DegenerateTrialSet,

    #[error("baseline FRR is zero; relative impact undefined")]
    BaselineZero,

    #[error("symmetric candidate impact must be positive, got {0}")]
    DegenerateGap(f64),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            got,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
