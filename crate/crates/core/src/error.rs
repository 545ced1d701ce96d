use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalError {
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Not enough data to produce the requested object.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// A counterfactual query whose target action never appears in the log.
    #[error("unevaluable counterfactual: {0}")]
    Unevaluable(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = CalError> = std::result::Result<T, E>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(CalError::Contract(msg.into()))
}
