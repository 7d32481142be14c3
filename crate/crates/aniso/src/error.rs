use thiserror::Error;

/// Errors surfaced by construction, validation and solver routines.
#[derive(Debug, Error)]
pub enum AnisoError {
    #[error("invalid gauge: {0}")]
    InvalidGauge(String),

    #[error("invalid energy: {0}")]
    InvalidEnergy(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid reaction: {0}")]
    InvalidReaction(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AnisoError>;
