use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid kinematic tree: {0}")]
    InvalidTree(String),
    #[error("total mass is zero")]
    ZeroMass,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown reward term `{0}`")]
    UnknownTerm(String),
    #[error("time went backwards: {now} ms after {last} ms")]
    TimeRegression { now: f64, last: f64 },
    #[error("simulation diverged at t = {time:.4} s")]
    Diverged { time: f64 },
    #[error("no recorded forward pass")]
    NoRecordedForward,
    #[error("unsupported format version {found} in {what} (this build reads up to {supported})")]
    UnknownVersion {
        what: &'static str,
        found: u32,
        supported: u32,
    },
    #[error("parse error in {path} at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("malformed {what}: {message}")]
    Malformed { what: &'static str, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(what: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what,
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

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::dims(what, expected, got))
    }
}
