use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("input {height}x{width} is not divisible by {divisor} (required by {what})")]
    Divisibility {
        height: usize,
        width: usize,
        divisor: usize,
        what: &'static str,
    },

    #[error("index {index} out of range 0..={max}")]
    Index { index: usize, max: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("divergence: non-finite loss at {stage} step {step}")]
    Divergence { stage: &'static str, step: usize },

    #[error("correlation undefined: {0} image is constant")]
    UndefinedCorrelation(&'static str),

    #[error("degenerate paired test: no nonzero differences")]
    DegenerateTest,

    #[error("zero-norm embedding")]
    ZeroNorm,

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("selection failed: every candidate was excluded")]
    SelectionFailure,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. })
    }
}
