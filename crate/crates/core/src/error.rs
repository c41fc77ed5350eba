use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame mismatch: `{left}` cannot be chained with `{right}`")]
    FrameMismatch { left: String, right: String },

    #[error("time {t:.9} s outside trajectory coverage [{start:.9}, {end:.9}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("trajectory needs at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("trajectory timestamps must be strictly increasing (sample {index})")]
    NonIncreasingTimestamps { index: usize },

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("not enough points: need {needed}, have {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("camera `{0}` has an empty frame schedule")]
    EmptySchedule(String),

    #[error("object {0} has no member points")]
    ObjectWithoutPoints(u64),

    #[error("match list is empty")]
    EmptyMatches,

    #[error("scene mismatch: {0}")]
    SceneMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
