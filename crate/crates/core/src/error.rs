use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid contour: {0}")]
    InvalidContour(String),

    #[error("degenerate contour: all points coincide")]
    DegenerateContour,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("malformed row at line {line}: expected 2 fields, found {found}")]
    MalformedRow { line: usize, found: usize },

    #[error("band {band} is narrower than the length difference {required}")]
    BandTooNarrow { band: usize, required: usize },

    #[error("index ({n1}, {n2}) out of range for lengths ({len1}, {len2})")]
    IndexOutOfRange {
        n1: usize,
        n2: usize,
        len1: usize,
        len2: usize,
    },

    #[error("invalid warping path: {0}")]
    InvalidPath(String),

    #[error("singular normal equations: {0}")]
    SingularSystem(String),

    #[error("empty contour set")]
    EmptySet,

    #[error("mean index {index} has support {count}, need at least {required}")]
    InsufficientSupport {
        index: usize,
        count: usize,
        required: usize,
    },

    #[error("filled region is empty at the given resolution")]
    ZeroArea,

    #[error("infeasible configuration: {0}")]
    ConfigInfeasible(String),

    #[error("order recovery failed: {0}")]
    OrderRecoveryFailed(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sample {sample}: {source}")]
    AtSample {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_sample(self, sample: usize) -> Self {
        Error::AtSample {
            sample,
            source: Box::new(self),
        }
    }

    /// Innermost error with iteration and sample context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } | Error::AtSample { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerics on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::DegenerateContour
                | Error::SingularSystem(_)
                | Error::InsufficientSupport { .. }
                | Error::ZeroArea
                | Error::OrderRecoveryFailed(_)
        )
    }
}
