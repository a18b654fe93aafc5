use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("frequencies lose strict monotonicity at index {index}")]
    NonMonotone { index: usize },

    #[error("stage {stage}: base height {found} does not match previous tower height {expected}")]
    HeightMismatch { stage: usize, expected: f64, found: f64 },

    #[error("height-ratio log sum {log_sum} exceeds the configured bound {bound}")]
    Divergent { log_sum: f64, bound: f64 },

    #[error("grid step {step} exceeds the Nyquist limit {limit}")]
    NyquistViolation { step: f64, limit: f64 },

    #[error("quadrature did not converge: refinement error {error} above tolerance {tolerance}")]
    QuadratureNotConverged { error: f64, tolerance: f64 },

    #[error("no q in the scanned range meets the flatness threshold")]
    NoneFound,

    #[error("sample grids do not match")]
    GridMismatch,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("escape fraction {fraction} exceeds the limit {limit}")]
    TooManyEscapes { fraction: f64, limit: f64 },

    #[error("t-grid spacing {spacing} is finer than the sample cell width {cell}")]
    ResolutionTooFine { spacing: f64, cell: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
