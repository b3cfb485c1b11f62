use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {message}", path.display())]
    Schema { path: PathBuf, message: String },
    #[error("{}, line {line}, field `{field}`: {message}", path.display())]
    Field { path: PathBuf, line: u64, field: String, message: String },
    #[error("{}: invalid JSON: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Usage(String),
    #[error("environment variable {name}: {message}")]
    Env { name: &'static str, message: String },
    #[error(transparent)]
    Core(#[from] cwlate_core::Error),
    #[error("cannot serialise report: {0}")]
    Serialise(String),
}

pub type Result<T> = std::result::Result<T, CliError>;
