use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the reconstruction engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {coord} = {value} outside domain [{lo}, {hi}]")]
    OutOfDomain {
        coord: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("polar angle {theta} within {margin} rad of a pole; 1/sin(theta) factors are singular")]
    PoleSingularity { theta: f64, margin: f64 },
    #[error("no observations for variable `{0}`")]
    NoData(String),
    #[error("kernel matrix not positive definite at pivot {pivot}; increase the noise variance or jitter")]
    Indefinite { pivot: usize },
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("training diverged at iteration {iter}: {context}")]
    Diverged { iter: usize, context: String },
    #[error("snapshot incompatible: {0}")]
    SnapshotMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 usage/config, 2 i/o, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::NonFinite(_) | Error::Diverged { .. } | Error::Indefinite { .. } => 3,
            _ => 1,
        }
    }
}
