use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("simulation failed: {0}")]
    Runtime(String),
}

impl HarnessError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            _ => 2,
        }
    }
}

impl From<wireless_scenarios::ScenarioError> for HarnessError {
    fn from(e: wireless_scenarios::ScenarioError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<conformal_core::CalError> for HarnessError {
    fn from(e: conformal_core::CalError) -> Self {
        Self::Runtime(e.to_string())
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
