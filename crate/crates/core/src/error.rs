use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u8),

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("declared dims overflow: {0:?}")]
    DimsOverflow(Vec<u32>),

    #[error("unsupported ppm: {0}")]
    UnsupportedPpm(String),

    #[error("too few frames in {dir}: need {needed}, found {found}")]
    TooFewFrames {
        dir: PathBuf,
        needed: usize,
        found: usize,
    },

    #[error("inconsistent frame dims: {0}")]
    InconsistentFrames(String),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("weights missing tensor {0:?}")]
    MissingTensor(String),

    #[error("weights contain unexpected tensor {0:?}")]
    UnexpectedTensor(String),

    #[error("duplicate tensor name {0:?}")]
    DuplicateTensor(String),

    #[error("unknown reduction strategy {0:?}")]
    UnknownStrategy(String),

    #[error("invalid reduction plan: {0}")]
    Plan(String),

    #[error("invalid token trace: {0}")]
    Trace(String),

    #[error("invalid benchmark request: {0}")]
    Bench(String),

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
