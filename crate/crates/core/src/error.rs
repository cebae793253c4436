use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("oracle scale exceeded: {nuclei} nuclei requested, at most {limit} supported")]
    OracleScale { nuclei: usize, limit: usize },

    #[error("degenerate toggle schedule: {0}")]
    DegenerateSchedule(String),

    #[error("coupling ({a_par_hz} Hz, {a_perp_hz} Hz) lies outside the image grid")]
    OutsideGrid { a_par_hz: f64, a_perp_hz: f64 },

    #[error("pixel ({row}, {col}) outside a {height}x{width} image")]
    PixelOutOfBounds {
        row: i64,
        col: i64,
        height: usize,
        width: usize,
    },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("digest mismatch for {path}")]
    DigestMismatch { path: PathBuf },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("misaligned evaluation sets: {0}")]
    Misaligned(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
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
