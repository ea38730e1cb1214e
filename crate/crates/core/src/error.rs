use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("mode {mode} out of range for tensor of order {order}")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("invalid rank: {0}")]
    InvalidRank(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("rank zero observation")]
    RankZeroObservation,

    #[error("sequence too short: {frames} frames, need at least {min}")]
    TooFewFrames { frames: usize, min: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("basis is not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),

    #[error("dictionary is empty")]
    EmptyDictionary,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: frame misalignment: {lines} joint lines is not a multiple of {joints}")]
    FrameMisalignment {
        path: String,
        lines: usize,
        joints: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("sample {id}: {source}")]
    Sample {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub fn for_sample(self, id: impl Into<String>) -> Self {
        Error::Sample {
            id: id.into(),
            source: Box::new(self),
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn at_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}
