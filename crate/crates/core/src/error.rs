use thiserror::Error;

/// Errors raised across the measurement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, bands, grids or configuration files.
    #[error("configuration error: {0}")]
    Config(String),

    /// Two objects that must share a frequency grid or provenance do not.
    #[error("mismatch: {0}")]
    Mismatch(String),

    /// A state, correlator or covariance matrix violates the quantum bounds.
    #[error("physicality violation: {0}")]
    Physicality(String),

    /// A fit or solver failed to produce a usable answer.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed binary trace or text input.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::Mismatch(msg.into())
    }

    pub(crate) fn physicality(msg: impl Into<String>) -> Self {
        Error::Physicality(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Format(e.to_string())
    }
}
