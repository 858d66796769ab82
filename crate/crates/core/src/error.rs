use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("Sherman-Morrison downdate is singular (h = {h:e})")]
    SingularDowndate { h: f64 },

    #[error("all removal weights vanish (sum = {sum:e})")]
    AllWeightsZero { sum: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("subset Gram matrix is rank deficient")]
    RankDeficientSubset,

    #[error("enumeration too large: {count} subsets exceeds limit {limit}")]
    TooLarge { count: u128, limit: u128 },

    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code used in JSON error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::SingularDowndate { .. } => "SingularDowndate",
            Error::AllWeightsZero { .. } => "AllWeightsZero",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::RankDeficientSubset => "RankDeficientSubset",
            Error::TooLarge { .. } => "TooLarge",
            Error::UnsupportedCombination(_) => "UnsupportedCombination",
            Error::Parse { .. } => "ParseError",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::Io(_) => "IoError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
