use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid ordering: {0}")]
    InvalidOrdering(String),
    #[error("invalid utility: {0}")]
    InvalidUtility(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("enumeration too large: {size} exceeds cap {cap}")]
    TooLarge { size: u128, cap: u128 },
    #[error("undefined posterior: {0}")]
    UndefinedPosterior(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unsupported instance: {0}")]
    Unsupported(String),
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("invalid epsilon: {0}")]
    InvalidEpsilon(String),
    #[error("invalid restriction: {0}")]
    InvalidRestriction(String),
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("certificate construction failed: {0}")]
    Certificate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
