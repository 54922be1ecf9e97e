use thiserror::Error;

/// Errors raised by the numerical kernels, operator oracles and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("power iteration did not converge in {iterations} iterations (last estimate {estimate})")]
    NoConvergence { iterations: usize, estimate: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("not positive definite")]
    NotPositiveDefinite,

    #[error("singular linear system")]
    Singular,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("no composite resolvent: {0}")]
    NoCompositeResolvent(String),

    /// A step-size or metric condition failed; the message carries both sides
    /// of the violated inequality.
    #[error("condition violated: {0}")]
    Condition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("line search failed after {backtracks} backtracks (gamma {gamma:e}, violation ratio {ratio})")]
    LineSearch {
        backtracks: usize,
        gamma: f64,
        ratio: f64,
    },

    #[error("non-finite value produced: {0}")]
    NonFinite(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
