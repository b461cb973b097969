use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("FRAS format error: {0}")]
    Fras(String),

    #[error("PLY error: {0}")]
    Ply(String),

    #[error("scene load error ({view}): {message}")]
    SceneLoad { view: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("external backend `{command}` failed: {message}")]
    ExternalBackend { command: String, message: String },

    #[error("non-finite gradient at primitive {primitive} (pixel {pixel:?}): {what}")]
    NonFiniteGradient {
        primitive: usize,
        pixel: Option<(usize, usize)>,
        what: String,
    },

    #[error("empty point set")]
    EmptyPointSet,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] ::image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
