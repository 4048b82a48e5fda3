use std::path::PathBuf;

/// Errors raised anywhere in the fingerprinting pipeline.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported or corrupt file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("shape mismatch: {left_h}x{left_w} vs {right_h}x{right_w}")]
    ShapeMismatch {
        left_h: usize,
        left_w: usize,
        right_h: usize,
        right_w: usize,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A crop or sampling window does not fit inside its source plane.
    #[error("window exceeds source plane by {overshoot:.3} px: {context}")]
    Window { overshoot: f64, context: String },

    #[error("objective returned non-finite value {value} at {point:?}")]
    Objective { point: Vec<f64>, value: f64 },

    #[error("no consensus: {0}")]
    NoConsensus(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("frame set still contains the first frame; exclude it before estimation")]
    FirstFrameNotExcluded,

    #[error("ROC needs both classes: {0}")]
    Class(String),

    #[error("sampling error: {0}")]
    Sampling(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
