use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance sequence is not summable (tail bound {0})")]
    NonSummable(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("quadrature failed to converge after {evals} evaluations")]
    QuadratureFailure { evals: usize },

    #[error("density vanishes on {fraction:.3} of the scan grid")]
    ZeroEverywhere { fraction: f64 },

    #[error("requested radius {needed} exceeds stored radius {available}")]
    RadiusTooSmall { needed: usize, available: usize },

    #[error("boxes {0} and {1} overlap")]
    OverlappingBoxes(usize, usize),

    #[error("box {0} has empty interior")]
    DegenerateBox(usize),

    #[error("matrix is not positive definite (pivot {pivot:e})")]
    NotPositiveDefinite { pivot: f64 },

    #[error("grid spacing {spacing} violates the Nyquist guard for bandlimit {bandlimit}")]
    NyquistViolation { spacing: f64, bandlimit: f64 },

    #[error("eigendecomposition failed: {0}")]
    EigFailure(String),

    #[error("window {window:?} does not fit in the sampling box with margin {margin}")]
    WindowOutOfBox { window: Vec<i64>, margin: f64 },

    #[error("rigidity undecided ({0})")]
    Inconclusive(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
