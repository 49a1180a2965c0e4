use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SveError {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("blow-up at step {step} (t = {t:e}): value {value:e}")]
    BlowUp { step: usize, t: f64, value: f64 },

    #[error("Picard iteration did not converge in {} iterations (last gap {:e})", gaps.len(), gaps.last().copied().unwrap_or(f64::NAN))]
    NotConverged { gaps: Vec<f64> },

    #[error("i/o error: {0}")]
    Io(String),
}

impl SveError {
    pub fn parameter(msg: impl Into<String>) -> Self {
        SveError::Parameter(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        SveError::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        SveError::Numerical(msg.into())
    }

    /// Process exit code for the command-line surface: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            SveError::Parameter(_) | SveError::Domain(_) | SveError::Io(_) => 2,
            SveError::Numerical(_) | SveError::BlowUp { .. } | SveError::NotConverged { .. } => 3,
        }
    }
}

impl From<std::io::Error> for SveError {
    fn from(e: std::io::Error) -> Self {
        SveError::Io(e.to_string())
    }
}

impl From<csv::Error> for SveError {
    fn from(e: csv::Error) -> Self {
        SveError::Io(e.to_string())
    }
}

pub type Result<T, E = SveError> = std::result::Result<T, E>;
