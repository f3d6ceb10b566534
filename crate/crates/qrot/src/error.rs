use thiserror::Error;

/// Errors raised by the bit-level, scheme and bound computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("operation requires a non-empty bit string")]
    EmptyInput,
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("cannot draw {size} elements from a universe of {universe}")]
    SubsetTooLarge { size: usize, universe: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("probability {0} outside the admissible range")]
    ProbabilityOutOfRange(f64),
    #[error("rate bracket undefined: (p_max + delta1) / (1/2 - delta2) = {0} >= 1/2")]
    RateBracketUndefined(f64),
    #[error("challenge vector is all-zero; verifier must resample")]
    ZeroChallenge,
    #[error("could not find an independent basis vector after {0} attempts")]
    BasisExhausted(usize),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("malformed encoding: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
