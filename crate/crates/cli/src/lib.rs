//! Configuration, subcommands and output formats of the `cmfe` tool.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod output;

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Violation(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// 1 usage/config, 2 numerical failure, 3 bound or acceptance violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Numerical(_) => 2,
            CliError::Violation(_) => 3,
        }
    }
}

impl From<cmfe_core::Error> for CliError {
    fn from(e: cmfe_core::Error) -> Self {
        match e {
            cmfe_core::Error::Numerical { .. } => CliError::Numerical(e.to_string()),
            cmfe_core::Error::Io(source) => CliError::Io { path: "<core>".into(), source },
            other => CliError::Config(other.to_string()),
        }
    }
}
