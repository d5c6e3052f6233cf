use thiserror::Error;

/// Errors raised by the estimation toolkit.
#[derive(Debug, Error)]
pub enum DoaError {
    #[error("invalid layout parameters: {0}")]
    InvalidLayoutParams(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("duplicate sensor id {0}")]
    DuplicateSensorId(String),
    #[error("grid resolution {0} deg does not divide 360 into an integral number of directions")]
    GridNotIntegral(f64),
    #[error("{sources} sources requested but the array has only {sensors} sensors (need K < M)")]
    TooManySources { sources: usize, sensors: usize },
    #[error("ragged snapshot rows: {0}")]
    RaggedRows(String),
    #[error("null space of the masked steering vectors is empty ({masked} masked directions, {sensors} sensors)")]
    NullspaceRank { masked: usize, sensors: usize },
    #[error("every grid direction is degenerate; spectrum is empty")]
    EmptySpectrum,
    #[error("sample covariance is singular and no diagonal loading was requested")]
    SingularCovariance,
    #[error("bad source count {k} for MUSIC with {sensors} sensors (need 1 <= K < M)")]
    BadSourceCount { k: usize, sensors: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DoaError>;
