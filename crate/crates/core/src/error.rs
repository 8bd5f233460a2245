use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing directory {0}")]
    MissingDirectory(PathBuf),
    #[error("non-contiguous frame indices: expected {expected}, found {found}")]
    NonContiguous { expected: usize, found: usize },
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("pgm {path}: {reason}")]
    Pgm { path: PathBuf, reason: String },
    #[error("annotations line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("model file version mismatch: found {found:?}, expected {expected:?}")]
    ModelVersion { found: String, expected: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("descriptor layout {found:#018x} does not match model layout {expected:#018x}")]
    LayoutMismatch { expected: u64, found: u64 },
    #[error("degenerate training set: {0}")]
    DegenerateTrainSet(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("window {0} is misaligned or outside the feature planes")]
    BadWindow(String),
    #[error("image of {width}x{height} is smaller than {min_width}x{min_height}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },
    #[error("frame dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("no score map for frame {frame} level {level}")]
    MissingScoreMap { frame: usize, level: usize },
    #[error("no ground truth in the evaluated subset")]
    EmptyGroundTruth,
    #[error("training sequence has no positive annotations")]
    NoPositives,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => ErrorClass::Usage,
            Error::NonFinite(_) | Error::DegenerateTrainSet(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}
