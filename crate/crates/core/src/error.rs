use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("support size {size} exceeds cap {cap}")]
    SupportCapExceeded { size: u128, cap: u128 },

    #[error("covariance is singular (min eigenvalue {min_eig:e} below floor {floor:e})")]
    SingularCovariance { min_eig: f64, floor: f64 },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cover has {count} elements, above cap {cap}")]
    CoverCapExceeded { count: u128, cap: u128 },

    #[error("tournament failed: every hypothesis lost a majority of its contests")]
    TournamentFailure,

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument { name, reason: reason.into() }
    }
}
