use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate point pair: points coincide")]
    DegeneratePair,
    #[error("model has too few points ({0}) for this operation")]
    TooFewPoints(usize),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("class {0} has no probability mass")]
    ClassAbsent(u32),
    #[error("could not place all instances of class {class_id} ({name}) in the bin")]
    PlacementFailure { class_id: u32, name: String },
    #[error("invalid scene specification: {0}")]
    InvalidSpec(String),
    #[error("base sampling exhausted its retry budget")]
    BaseSamplingFailed,
    #[error("no training samples")]
    NoSamples,
    #[error("infeasible selection: {0}")]
    InfeasibleSelection(String),
    #[error("invalid selection problem: {0}")]
    InvalidProblem(String),
    #[error("unknown class id {0}")]
    UnknownClass(u32),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
