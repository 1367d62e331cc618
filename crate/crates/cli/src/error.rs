use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mrf_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("unknown config key(s): {0}")]
    UnknownKeys(String),

    #[error("bad value for `{key}`: {message}")]
    BadValue { key: String, message: String },

    #[error("walk budget of {estimate:.3e} steps exceeds the limit {limit:.3e}")]
    Budget { estimate: f64, limit: f64 },

    #[error("kNN graph is disconnected and {0}")]
    Disconnected(String),

    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn bad_value(key: &str, message: impl Into<String>) -> CliError {
    CliError::BadValue {
        key: key.to_string(),
        message: message.into(),
    }
}
