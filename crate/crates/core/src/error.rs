use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate block split: n = {n}, inhibitory count = {fn_count} (both blocks must be nonempty)")]
    DegenerateBlock { n: usize, fn_count: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {found} exceeds the limit {limit} of the dense oracle")]
    DimensionTooLarge { limit: usize, found: usize },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("time grid must start at 0 and be strictly increasing")]
    NonMonotoneGrid,

    #[error("time {time} is not a point of the trajectory grid")]
    OffGrid { time: f64 },

    #[error("integrator step underflow (step {step:e})")]
    StepUnderflow { step: f64 },

    #[error("trajectory carries no accumulated w_n(t) values")]
    MissingW,

    #[error("series did not converge after {terms} terms")]
    SeriesNotConverged { terms: usize },

    #[error("value overflowed: {what}")]
    Overflow { what: &'static str },

    #[error("Stieltjes transform requires Im z != 0")]
    RealSpectralArgument,

    #[error("w_n branch mismatch: {0}")]
    BranchMismatch(&'static str),

    #[error("variance is zero across trials; decay slope is undefined")]
    DegenerateVariance,

    #[error("eigensolver failed to converge for a {n}x{n} matrix")]
    EigenFailure { n: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
