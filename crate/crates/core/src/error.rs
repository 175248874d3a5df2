use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed PLY: {0}")]
    Ply(String),

    #[error("missing color property `{0}`")]
    MissingColor(&'static str),

    #[error("empty frame")]
    EmptyFrame,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no reference candidates")]
    NoReferenceCandidates,

    #[error("point index {index} out of range ({len} points)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unexpected end of stream")]
    UnexpectedEof,

    #[error("bad magic: not a PGFT bitstream")]
    BadMagic,

    #[error("unsupported bitstream version {0}")]
    UnsupportedVersion(u8),

    #[error("corrupt bitstream: {0}")]
    Corrupt(String),

    #[error("reference geometry mismatch (frame {frame})")]
    GeometryMismatch { frame: usize },

    #[error("cannot fit lambda model: {0}")]
    LambdaFit(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("frame {index}: {source}")]
    InFrame {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attaches a frame index unless the error already names one.
    pub(crate) fn in_frame(self, index: usize) -> Self {
        match self {
            e @ (Error::InFrame { .. } | Error::GeometryMismatch { .. }) => e,
            e => Error::InFrame {
                index,
                source: Box::new(e),
            },
        }
    }

    /// The error with any frame context removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::InFrame { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
