use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two objects that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A parameter is outside the domain where the object is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration; the first field names the offending key.
    #[error("invalid config `{key}`: {message}")]
    Config { key: String, message: String },

    /// The time integrator produced non-finite values or crossed the blow-up ceiling.
    #[error("integrator failure at t = {time}: {message}")]
    Integrator { time: f64, message: String },

    #[error("eigensolve failure: {0}")]
    Eigen(String),

    #[error("fit failure: {0}")]
    Fit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Numerical failures map to exit code 2, configuration problems to 1.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Integrator { .. } | Error::Eigen(_) | Error::Fit(_)
        )
    }
}
