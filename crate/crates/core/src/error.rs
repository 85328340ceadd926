use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("diverged at round {round}, client {client}, step {step}")]
    Diverged { round: usize, client: usize, step: usize },

    #[error("server update diverged at round {round}")]
    ServerDiverged { round: usize },

    #[error("cannot partition {samples} samples across {clients} clients")]
    TooManyClients { clients: usize, samples: usize },

    #[error("{path}: row {row}, column {column}: {message}")]
    Csv { path: PathBuf, row: usize, column: String, message: String },

    #[error("config error in {path}{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config { path: PathBuf, line: Option<usize>, message: String },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("model file {path}: {message}")]
    ModelFile { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
