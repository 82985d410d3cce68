use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("latent dimension must be at least 1")]
    InvalidDimension,

    #[error("cannot combine an empty selection of latents")]
    EmptySelection,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("weights sum to zero")]
    DegenerateWeights,

    #[error("length mismatch: {left} vectors but {right} weights")]
    LengthMismatch { left: usize, right: usize },

    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("latent component {index} is not finite")]
    NonFinite { index: usize },

    #[error("axis fitting needs samples from both label classes")]
    InsufficientClasses,

    #[error("axis '{0}' lies in the span of the locked axes")]
    DegenerateAxis(String),

    #[error("unknown feature axis '{0}'")]
    UnknownAxis(String),

    #[error("no unlocked features available for this mutation mode")]
    NoUnlockedFeatures,

    #[error("feature '{0}' is locked")]
    LockedFeature(String),

    #[error("feature '{feature}' unavailable while locks are held: {locks:?}")]
    FeatureUnavailable { feature: String, locks: Vec<String> },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("generator backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),

    #[error("unsupported file version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("lineup screening failed after {0} attempts")]
    ScreeningFailure(usize),

    #[error("recognition rate needs at least one vote")]
    NoVotes,

    #[error("validation error: {0}")]
    Validation(String),

    #[error("slot index {0} out of range")]
    InvalidSlot(usize),

    #[error("session is finished")]
    SessionFinished,

    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
