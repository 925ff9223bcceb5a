use thiserror::Error;

use omdlab_core::OmdError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("unknown preset {name:?}; valid names: {valid}")]
    UnknownPreset { name: String, valid: String },

    #[error("{context}: {source}")]
    Run {
        context: String,
        #[source]
        source: OmdError,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub(crate) fn config(line: usize, msg: impl Into<String>) -> Self {
        CliError::Config { line, msg: msg.into() }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
