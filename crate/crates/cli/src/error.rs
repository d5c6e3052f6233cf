use std::fmt;

use doalab_core::DoaError;

/// Harness failure, classified by the exit code it maps to.
#[derive(Debug)]
pub enum HarnessError {
    /// Inconsistent or unreadable input; exit code 2.
    Config(String),
    /// The estimator or an assertion on its output failed; exit code 3.
    Numerical(String),
    /// Writing results failed; exit code 1.
    Output(std::io::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numerical(_) => 3,
            HarnessError::Output(_) => 1,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(msg) => write!(f, "configuration error: {msg}"),
            HarnessError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            HarnessError::Output(e) => write!(f, "cannot write output: {e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<DoaError> for HarnessError {
    fn from(e: DoaError) -> Self {
        match e {
            DoaError::NullspaceRank { .. } | DoaError::EmptySpectrum | DoaError::SingularCovariance => {
                HarnessError::Numerical(e.to_string())
            }
            // input files are the only thing the core reads
            _ => HarnessError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Output(e)
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Output(e.into())
    }
}
