use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("reduction over an empty axis in {op}")]
    EmptyReduction { op: &'static str },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("row {row} has zero norm; cosine similarity is undefined")]
    ZeroNorm { row: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{file}: bad magic bytes (expected {expected:?})")]
    BadMagic {
        file: String,
        expected: &'static str,
    },

    #[error("{file}: {msg}")]
    Format { file: String, msg: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("seen and unseen class sets overlap at class {0}")]
    OverlappingSplits(u32),

    #[error("dataset invariant violated: {0}")]
    InvalidDataset(String),

    #[error("class {0} has no training rows")]
    EmptyClass(u32),

    #[error("training diverged at epoch {epoch}, batch {batch}: {source}")]
    Diverged {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("config is missing keys: {}", .0.join(", "))]
    MissingConfigKeys(Vec<String>),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed input files or configuration
    /// rather than by a failure while computing.
    pub fn is_format_error(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::Format { .. }
                | Error::DimensionMismatch(_)
                | Error::OverlappingSplits(_)
                | Error::InvalidDataset(_)
                | Error::Config(_)
                | Error::MissingConfigKeys(_)
        )
    }
}
