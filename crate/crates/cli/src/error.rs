use std::process::ExitCode;

use thiserror::Error;

use crate::config::Stage;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },

    #[error("threshold check failed: {0}")]
    Threshold(String),
}

impl CliError {
    pub fn stage(stage: Stage, message: impl std::fmt::Display) -> Self {
        CliError::Stage {
            stage: stage.name().to_string(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } => 3,
            CliError::Threshold(_) => 4,
        }
    }
}

impl From<&CliError> for ExitCode {
    fn from(e: &CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}
