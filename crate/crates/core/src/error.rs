use thiserror::Error;

/// Which part of the decay certificate `0 < H < alpha * P` failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolatedCondition {
    /// `H` is not positive definite.
    HNotPositiveDefinite,
    /// `alpha * P - H` is not positive definite.
    DecayRateExceeded,
    /// `P` itself is not positive definite.
    PNotPositiveDefinite,
}

impl std::fmt::Display for ViolatedCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ViolatedCondition::HNotPositiveDefinite => write!(f, "H is not positive definite"),
            ViolatedCondition::DecayRateExceeded => {
                write!(f, "alpha*P - H is not positive definite")
            }
            ViolatedCondition::PNotPositiveDefinite => write!(f, "P is not positive definite"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("malformed matrix: {0}")]
    Malformed(String),
    #[error("matrix is singular (pivot {pivot:e} in column {column})")]
    Singular { column: usize, pivot: f64 },
    #[error("eigendecomposition did not converge after {sweeps} sweeps")]
    EigenNoConvergence { sweeps: usize },
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("level value phi must be positive, got {0}")]
    NonPositivePhi(f64),
    #[error("invalid safety set: {0}")]
    InvalidSafetySet(String),
    #[error("containment certificate requires a zero offset v (row {row} has v = {value})")]
    AsymmetricSafetySet { row: usize, value: f64 },
    #[error("support direction must be nonzero")]
    ZeroDirection,
    #[error("invalid angle grid: {0}")]
    InvalidGrid(String),
    #[error("empty sampling interval in dimension {dim}: [{low}, {high}]")]
    EmptyInterval { dim: usize, low: f64, high: f64 },
    #[error("Riccati recursion did not converge within {iterations} iterations")]
    RiccatiNoConvergence { iterations: usize },
    #[error("decay condition violated: spectral radius of A_bar/sqrt(alpha) is not below 1")]
    DecayConditionViolated,
    #[error("containment impossible: {0}")]
    ContainmentImpossible(String),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("certificate violation: {condition} (smallest eigenvalue {min_eigenvalue:e})")]
    CertificateViolation {
        condition: ViolatedCondition,
        min_eigenvalue: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(CoreError::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
