use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid parameters: {0}")]
    InvalidGrid(String),

    #[error("invalid value space: {0}")]
    InvalidSpace(String),

    #[error("value array has length {got}, expected {expected}")]
    ValueLength { expected: usize, got: usize },

    #[error("non-finite value at cell {cell}, component {component}")]
    NonFinite { cell: usize, component: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported dimension n = {0}")]
    UnsupportedDimension(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {0:?} is not in the open set")]
    PointOutsideSet([f64; 2]),

    #[error("atom support leaves the tent over its ball at {} cells", cells.len())]
    SupportLeak { cells: Vec<usize> },

    #[error("support leaves the truncation box: {0}")]
    TruncationViolation(String),

    #[error("cutoff is infeasible for aperture {alpha}: needs alpha >= {min_alpha:.6}")]
    InfeasibleCutoff { alpha: f64, min_alpha: f64 },

    #[error("unsupported domination hypothesis: {0}")]
    UnsupportedHypothesis(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("product grid too large: {cells} entries exceeds limit {limit}")]
    ProductGridTooLarge { cells: usize, limit: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("format error: {0}")]
    Format(String),
}
