use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value {value} at node {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("CFL violation: dt/h = {ratio} exceeds 1")]
    Cfl { ratio: f64 },

    #[error("asymptotic solution blows up at s = {s}, q = {q} (A = {a})")]
    BlowupReached { s: f64, q: f64, a: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient range: {0}")]
    InsufficientRange(String),

    #[error("empty search set: {0}")]
    EmptySearch(String),

    #[error("configuration has {} error(s):\n{}", .0.len(), join_lines(.0))]
    Config(Vec<crate::config::ConfigError>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join_lines(errors: &[crate::config::ConfigError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
