use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("point lies outside the shaping region")]
    OutOfShapingRegion,

    #[error("{0} is not a prime")]
    NotPrime(u32),

    #[error("both channel gains are zero")]
    ZeroChannel,

    #[error("codebook has {size} points, more than the limit {limit}")]
    CodebookTooLarge { size: u128, limit: u128 },

    #[error("invalid code: {0}")]
    InvalidCode(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("fixed-point iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("no feasible point: {0}")]
    Infeasible(String),

    #[error("rank deficient system at column {0}")]
    RankDeficient(usize),

    #[error("time budget of {0} s exceeded")]
    BudgetExceeded(f64),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
