use thiserror::Error;

use crate::report::EstimateReport;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] ratiomi_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("training diverged at step {step}: {message}")]
    Divergence { step: usize, message: String, partial: Box<EstimateReport> },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Process exit code: 2 config, 3 numeric divergence, 4 oracle budget, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        use ratiomi_core::Error as E;
        match self {
            HarnessError::Config(_) | HarnessError::Toml(_) | HarnessError::Json(_) => 2,
            HarnessError::Core(E::Config(_) | E::Batch { .. } | E::Dimension { .. } | E::Domain(_)) => 2,
            HarnessError::Core(E::Numeric(_)) | HarnessError::Divergence { .. } => 3,
            HarnessError::Core(E::Budget { .. }) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
