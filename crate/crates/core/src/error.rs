use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while building or validating a model or scenario.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid DG parameters for {dg}: {reason}")]
    DgParams { dg: String, reason: String },
    #[error("invalid network: {0}")]
    Network(String),
    #[error("communication graph: {0}")]
    CommGraph(String),
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("link schedule: {0}")]
    LinkSchedule(String),
    #[error("observer window: {0}")]
    ObserverWindow(String),
    #[error("kernel parameters: {0}")]
    Kernel(String),
    #[error("scenario key `{key}`: {reason}")]
    Scenario { key: String, reason: String },
}

/// Raised by the integrator when a state goes non-finite.
#[derive(Debug, Clone, Error)]
pub enum PlantError {
    #[error("non-finite state at t={t:.6} s: DG{dg} state index {index} ({name})")]
    NonFiniteDg {
        t: f64,
        dg: usize,
        index: usize,
        name: &'static str,
    },
    #[error("non-finite network current at t={t:.6} s: {branch}")]
    NonFiniteNetwork { t: f64, branch: String },
}

/// Top-level error for loading and running scenarios.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("plant diverged: {0}")]
    Divergence(#[from] PlantError),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
