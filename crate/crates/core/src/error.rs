use thiserror::Error;

/// Errors produced by the dictionary kernels, solvers and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("support of size {size} exceeds block dimension {m}; restricted projection is ill-posed")]
    OverWideSupport { size: usize, m: usize },

    #[error("{solver} cannot run on a dictionary with p = {p} blocks")]
    WrongSolver { solver: &'static str, p: usize },

    #[error("contraction ratio undefined: {0}")]
    UndefinedRatio(String),

    #[error("enumeration too large: {0}")]
    TooLarge(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad inputs or specifications rather than by
    /// the numerics. The CLI maps these to a distinct exit code.
    pub fn is_spec_error(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::UndefinedRatio(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
