use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("n*d must be even (n = {n}, d = {d})")]
    Parity { n: usize, d: usize },

    #[error("matrix is not symmetric: entry ({row}, {col}) differs from its transpose by {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("row sums do not vanish: max |row sum| = {max_row_sum:e}, allowed {tolerance:e}")]
    ConstraintViolated { max_row_sum: f64, tolerance: f64 },

    #[error("eigensolver failed to converge: {reason}; matrix dump follows\n{dump}")]
    EigenFailure { reason: String, dump: String },

    #[error("degenerate spectrum: |lambda_{i} - lambda_{j}| = {gap:e}")]
    DegenerateSpectrum { i: usize, j: usize, gap: f64 },

    #[error("eigenvalue gap collapsed to {gap:e} (threshold {threshold:e}) at t = {time}")]
    GapCollapse { gap: f64, threshold: f64, time: f64 },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("outside the admissible regime: {0}")]
    Regime(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LabError {
    LabError::InvalidInput(msg.into())
}
