use std::path::PathBuf;

use crate::numerics::NumericsError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error("network solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NetworkNonConvergence { iterations: usize, residual: f64 },

    #[error("steady-state initialization failed: {0}")]
    Equilibrium(String),

    #[error("event generation failed for load {load} p.u.{}: {source}", index.map(|i| format!(" (event {i})")).unwrap_or_default())]
    Event {
        index: Option<usize>,
        load: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("model numerical error: {0}")]
    Model(String),

    #[error("training aborted at iteration {iteration}{}: {source}", last_checkpoint.as_ref().map(|p| format!(" (last checkpoint {})", p.display())).unwrap_or_default())]
    Training {
        iteration: usize,
        last_checkpoint: Option<PathBuf>,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
