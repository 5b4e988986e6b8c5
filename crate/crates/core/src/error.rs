use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch, {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },

    #[error("{op}: empty input")]
    Empty { op: &'static str },

    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },

    #[error("{op}: iteration diverged (condition estimate {condition:.3e})")]
    Diverged { op: &'static str, condition: f64 },

    #[error("tempered energy overflow: h^2/T = {ratio:.1} exceeds 700 at temperature T = {temperature}")]
    TemperedOverflow { temperature: f64, ratio: f64 },

    #[error("goodness '{name}': {reason}")]
    Goodness { name: &'static str, reason: String },

    #[error("unknown goodness '{name}'; valid names: {}", valid.join(", "))]
    UnknownGoodness { name: String, valid: Vec<&'static str> },

    #[error("non-finite training loss for objective '{objective}' at layer {layer}")]
    NonFiniteLoss { objective: &'static str, layer: usize },

    #[error("{path}: unexpected magic 0x{found:08x} (expected 0x{expected:08x})")]
    UnexpectedMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("{path}: truncated file, expected {expected} bytes, found {found}")]
    Truncated { path: PathBuf, expected: u64, found: u64 },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("{path}: invalid label {label} at record {index}")]
    InvalidLabel { path: PathBuf, index: usize, label: i64 },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
