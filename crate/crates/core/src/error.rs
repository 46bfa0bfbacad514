use thiserror::Error;

use crate::floatsim::FpFormat;

/// Errors raised by the simulated arithmetic, the factorizations and the harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{value:e} overflows {}", format.name())]
    Overflow { value: f64, format: FpFormat },

    #[error("NaN is not a valid operand")]
    NotANumber,

    #[error("the zero vector has no Householder reflector")]
    ZeroVector,

    #[error("matrix is rank deficient at column {0}")]
    RankDeficient(usize),

    #[error("cannot run {levels}-level TSQR on a {m}x{n} matrix (need levels >= 1 and m >= 2^levels * n)")]
    InvalidLevels { m: usize, n: usize, levels: u32 },

    #[error("error bound undefined: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Error::Io(e.to_string())
        } else {
            Error::Parse(e.to_string())
        }
    }
}
