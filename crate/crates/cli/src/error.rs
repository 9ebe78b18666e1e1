use std::path::Path;

use learned_rsa::agents::model::ModelError;
use learned_rsa::agents::AgentError;
use learned_rsa::corpus::CorpusError;
use learned_rsa::eval::EvalError;
use learned_rsa::features::FeatureError;
use learned_rsa::optimize::TrainError;
use learned_rsa::rsa::RsaError;
use thiserror::Error;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_VALIDATION: u8 = 4;
pub const EXIT_DIVERGENCE: u8 = 5;
pub const EXIT_IO: u8 = 6;
pub const EXIT_GRADCHECK: u8 = 7;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    GradCheck(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Divergence(_) => EXIT_DIVERGENCE,
            CliError::Io(_) => EXIT_IO,
            CliError::GradCheck(_) => EXIT_GRADCHECK,
            CliError::Other(_) => EXIT_OTHER,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::Io(e.to_string()),
            CorpusError::Parse { .. } | CorpusError::Attribute(_) | CorpusError::Xml { .. } => {
                CliError::Parse(e.to_string())
            }
            CorpusError::Validation { .. } | CorpusError::MessageSpaceTooLarge { .. } => {
                CliError::Validation(e.to_string())
            }
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } => CliError::Divergence(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Training {
                source: TrainError::Divergence { .. },
                ..
            } => CliError::Divergence(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<RsaError> for CliError {
    fn from(e: RsaError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Validation(e.to_string())
    }
}
