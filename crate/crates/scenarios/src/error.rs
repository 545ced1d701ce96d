use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Calibration(#[from] conformal_core::CalError),
}

pub type Result<T, E = ScenarioError> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(ScenarioError::Invalid(msg.into()))
}
