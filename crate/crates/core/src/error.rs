use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("jet order {0} is not supported (maximum is 4)")]
    UnsupportedOrder(usize),

    #[error("point {point:?} lies outside the smoothness domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("finite-difference stencil leaves the domain at {point:?}")]
    StencilOutOfDomain { point: Vec<f64> },

    #[error("finite-difference step {0:e} underflows")]
    StepUnderflow(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("metric is not positive definite (eigenvalues {eigenvalues:?})")]
    SingularMetric { eigenvalues: Vec<f64> },

    #[error("matrix is not hermitian (defect {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not strictly diagonally dominant (margin {0:e})")]
    Infeasible(f64),

    #[error("property `{property}` violated at {witness:?}: {detail}")]
    PropertyViolation { property: &'static str, witness: Vec<f64>, detail: String },

    #[error("quadrature did not converge (estimated error {0:e})")]
    Quadrature(f64),

    #[error("zero denominator in intersection data")]
    ZeroDenominator,

    #[error("frame does not satisfy its divisor condition: {0}")]
    BadFrame(String),

    #[error("positivity lost in newton iteration {iteration}")]
    PositivityLost { iteration: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e}, trace {trace:?})")]
    NoConvergence { iterations: usize, residual: f64, trace: Vec<f64> },

    #[error("linear solver stalled after {iterations} iterations (residual {residual:e})")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("region `{0}` could not be located")]
    RegionNotFound(String),

    #[error("not enough points for a fit ({0})")]
    InsufficientData(usize),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
