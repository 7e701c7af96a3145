use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension {dim}: ladder operators need at least 2 Fock levels")]
    InvalidDimension { dim: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("truncation leak {leak:.3e} exceeds tolerance; need at least {required_dim} Fock levels")]
    Truncation { leak: f64, required_dim: usize },

    #[error("invalid rate {name} = {value}")]
    InvalidRate { name: &'static str, value: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value produced at step {step}")]
    NumericFailure { step: usize },

    #[error(
        "positivity violated at t = {time}: smallest eigenvalue {min_eigenvalue:.3e}; \
         reduce dt or enlarge the truncation"
    )]
    Positivity { time: f64, min_eigenvalue: f64 },

    #[error("step clamped {clamped:.3e} of probability mass at step {step}; reduce dt")]
    StepSize { step: usize, clamped: f64 },

    #[error("posterior mass underflowed: observation {x} is inconsistent with the support")]
    DegenerateEvidence { x: f64 },

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty sample window after discarding warm-up")]
    EmptyWindow,

    #[error("{} of {total} trajectories failed (indices {failed:?}): {first}", failed.len())]
    Ensemble {
        total: usize,
        failed: Vec<usize>,
        first: Box<Error>,
    },
}
