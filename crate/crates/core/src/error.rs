use thiserror::Error;

/// Errors raised by the exact and numeric routines of this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient moments: order {requested} requested but the profile stops at {available}")]
    InsufficientMoments { requested: usize, available: usize },

    /// An enumeration would exceed its size guard.
    #[error("enumeration guard exceeded: {what} needs {size} terms (limit {limit})")]
    GuardExceeded { what: &'static str, size: u128, limit: u128 },

    #[error("moment profile rejected: {0}")]
    InvalidProfile(String),

    #[error("singular Gram matrix X^T X")]
    Singular,

    #[error("ill-conditioned Gram matrix (condition estimate {0:.3e})")]
    IllConditioned(f64),

    #[error("design matrix is rank deficient after {attempts} attempts")]
    RankDeficient { attempts: u32 },

    /// A floating point check failed or an accumulator left the finite range.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// True for failures of floating point machinery rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singular
                | Error::IllConditioned(_)
                | Error::RankDeficient { .. }
                | Error::Numeric(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
