use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(#[from] ismc_core::Error),
    #[error("filters collapsed at the pilot anchor for every particle count tried")]
    CollapseAtAnchor,
    #[error("pilot tuning did not reach the target within {0} particles")]
    PilotCap(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("data error: {0}")]
    Data(String),
}

impl PipelineError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    /// Process exit code: 2 for configuration and input problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        use ismc_core::Error as E;
        match self {
            Self::Config(_) | Self::Io(_) | Self::Data(_) => 2,
            Self::Numeric(E::InvalidArgument(_) | E::InvalidModel(_) | E::ThetaMismatch) => 2,
            Self::Numeric(_) | Self::CollapseAtAnchor | Self::PilotCap(_) => 3,
        }
    }
}

impl From<csv::Error> for PipelineError {
    fn from(e: csv::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        Self::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
