use thiserror::Error;

#[derive(Debug, Error)]
pub enum FramexError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero vector where a nonzero one is required")]
    ZeroVector,
    #[error("operator is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("family is not a frame (lower bound {lower:.3e}, upper bound {upper:.3e})")]
    NotAFrame { lower: f64, upper: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no admissible beta: ratio {0:.6e} lies outside (2^-64, 2]")]
    NoAdmissibleBeta(f64),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("inconsistent selector tree: {0}")]
    InconsistentTree(String),
    #[error("empty mask")]
    EmptyMask,
    #[error("window is identically zero")]
    ZeroWindow,
    #[error("parameter grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl FramexError {
    pub fn precondition(msg: impl Into<String>) -> Self {
        FramexError::Precondition(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, FramexError>;
