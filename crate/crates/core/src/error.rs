use thiserror::Error;

/// Errors raised by model validation, discretization, integration and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{field}` is not finite (got {value})")]
    NonFinite { field: &'static str, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid initial data: {0}")]
    InitialData(String),

    #[error("model is not admissible: {0}")]
    Inadmissible(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("numerical failure at t = {t}: {reason}")]
    Numerical { t: f64, reason: String },

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { field, value })
    }
}
