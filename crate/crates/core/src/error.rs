use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rle decode error: {0}")]
    Decode(String),

    /// A mask or region that had to contain pixels was empty.
    #[error("empty region{}: {message}", instance.map(|i| format!(" (instance {i})")).unwrap_or_default())]
    EmptyRegion {
        instance: Option<u32>,
        message: String,
    },

    #[error("frame ordering violated: got frame {got} after frame {last}")]
    Ordering { last: u64, got: u64 },

    #[error("tracker backend `{adapter}` failed: {message}")]
    TrackerBackend { adapter: String, message: String },

    #[error("segmenter backend `{adapter}` failed: {message}")]
    SegmenterBackend { adapter: String, message: String },

    #[error("capability error: {0}")]
    Capability(String),

    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("alignment error: no ground truth for frames {missing:?}")]
    Alignment { missing: Vec<u64> },

    #[error("manifest error: {message}: {paths:?}")]
    Manifest { message: String, paths: Vec<PathBuf> },

    #[error("insufficient data: need {needed} frames, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("illegal state transition: {0}")]
    State(String),

    #[error("at frame {frame}: {source}")]
    AtFrame {
        frame: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn empty_region(instance: Option<u32>, msg: impl Into<String>) -> Self {
        Error::EmptyRegion {
            instance,
            message: msg.into(),
        }
    }

    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a frame index, unless one is already attached.
    pub fn at_frame(self, frame: u64) -> Self {
        match self {
            e @ Error::AtFrame { .. } => e,
            e => Error::AtFrame {
                frame,
                source: Box::new(e),
            },
        }
    }

    /// Strip any frame context and return the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtFrame { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_empty_region(&self) -> bool {
        matches!(self.root(), Error::EmptyRegion { .. })
    }
}
