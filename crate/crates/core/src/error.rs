use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("grade overflow: {j} + {l} > {n}")]
    GradeOverflow { j: usize, l: usize, n: usize },

    #[error("zero k-vector: {0}")]
    ZeroVector(&'static str),

    #[error("k-vector is not simple (associated space has dimension {found}, expected {expected})")]
    NotSimple { found: usize, expected: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("integrand {name} returned negative value {value}")]
    NegativeIntegrand { name: String, value: f64 },

    #[error("orientation violation: atom {index} has inner product {inner} with the reference plane")]
    Orientation { index: usize, inner: f64 },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("sampler gave up after {attempts} attempts: {reason}")]
    RetryBudget { attempts: usize, reason: String },

    #[error("boundary mismatch: {0}")]
    BoundaryMismatch(String),

    #[error("continuity violation: {0}")]
    Continuity(String),

    #[error("approximation failed: {0}")]
    Approximation(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
