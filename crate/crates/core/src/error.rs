use thiserror::Error;

use crate::polymap::ParseError;

/// Errors raised by the evaluation, counting and decay routines.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("{0} is not a prime")]
    NotPrime(u64),

    #[error("naive budget must be at least 1")]
    ZeroBudget,

    #[error("budget exceeded: {required} points required, {available} available")]
    BudgetExceeded { required: u128, available: u64 },

    #[error("recursive search visited more than {limit} balls")]
    SearchBudgetExceeded { limit: u64 },

    #[error("modulus p^{exponent} does not fit in 62 bits (p = {p})")]
    PrecisionOverflow { p: u64, exponent: u32 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("level too low: y needs level {required}, requested level {level}")]
    LevelTooLow { required: u32, level: u32 },

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("series floor never reaches {target} (checked up to total degree {max_degree})")]
    FloorNeverReaches { target: i64, max_degree: u32 },

    #[error("series coefficient at {exponent:?} has valuation {valuation}, below the declared floor {floor}")]
    FloorViolated {
        exponent: Vec<u32>,
        valuation: i64,
        floor: i64,
    },

    #[error("point {0:?} is not p-integral")]
    NotIntegral(String),

    #[error("invalid Schwartz-Bruhat term: {0}")]
    InvalidBall(String),

    #[error("not enough usable records for a fit: {0}")]
    InsufficientData(String),

    #[error("all records vanish exactly; no exponent can be fitted")]
    ExactVanishing,

    #[error(transparent)]
    Parse(#[from] ParseError),
}

pub type Result<T> = std::result::Result<T, Error>;
