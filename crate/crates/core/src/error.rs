use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semi-definite (eigenvalue {0:e})")]
    NotPositiveSemiDefinite(f64),

    #[error("observation residual leaves the support of the covariance (relative null-space norm {0:e})")]
    OffSupport(f64),

    #[error("enumeration of {required} candidates exceeds the budget of {budget}")]
    BudgetExceeded { required: f64, budget: u64 },

    #[error("invalid community sizes: {0}")]
    InvalidSizes(String),

    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid label {label} (expected 1..={k})")]
    InvalidLabel { label: usize, k: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
