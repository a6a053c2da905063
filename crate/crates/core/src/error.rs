use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Header or record that could not be parsed. `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("truncated body: expected {expected}, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("uncolored point cloud unsupported")]
    Uncolored,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("texture error: {0}")]
    Texture(String),

    #[error("empty projection")]
    EmptyProjection,

    #[error("image too small for grid: need at least {need_w}x{need_h}, got {got_w}x{got_h}")]
    ImageTooSmall {
        need_w: usize,
        need_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("constant input")]
    ConstantInput,

    #[error("backend error: {0}")]
    Backend(String),

    #[error("weights not found: {}", .0.display())]
    WeightsNotFound(PathBuf),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("stage `{stage}` failed: {source}")]
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

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad user input or configuration rather than
    /// by a failure inside the pipeline.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::WeightsNotFound(_) | Error::UnsupportedFormat(_)
        )
    }
}
