use thiserror::Error;

/// Errors produced by the laboratory pipeline.
#[derive(Error, Debug)]
pub enum CurvError {
    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered in {context} at node {node}")]
    NonFinite { context: String, node: usize },

    #[error("metric not positive definite at node {node} ({detail})")]
    DegenerateMetric { node: usize, detail: String },

    #[error("solver did not converge after {iterations} iterations (relative residual {final_residual:.3e})")]
    SolverDiverged {
        iterations: usize,
        final_residual: f64,
        history: Vec<f64>,
    },

    #[error("solver breakdown: {0}")]
    SolverBreakdown(String),

    #[error("bad magic: not an AFID1 file")]
    FormatMagic,

    #[error("unsupported byte-order `{0}` (expected `le`)")]
    FormatByteOrder(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    FormatTruncated { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    FormatDimension(String),

    #[error("malformed header: {0}")]
    FormatHeader(String),

    #[error("non-finite payload in field `{0}`")]
    FormatNonFinite(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, CurvError>;
