use thiserror::Error;

/// Errors produced by simulation, fitting and calibration routines.
#[derive(Debug, Error)]
pub enum CalibError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("{name} value {value} at index {index} is outside its range [{min}, {max}]")]
    OutOfRange {
        name: String,
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("covariance is not positive definite after jitter {jitter:e} (n = {n}, max diagonal = {max_diag:e})")]
    NotPositiveDefinite { jitter: f64, n: usize, max_diag: f64 },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CalibError> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(CalibError::Dimension {
            context: context.to_string(),
            expected,
            actual,
        });
    }
    Ok(())
}
