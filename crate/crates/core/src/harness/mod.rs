//! Scenario configuration, closed-loop simulation, dataset replay and log
//! output.

pub mod config;
pub mod log;
pub mod replay;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use config::RunConfig;
pub use log::{read_states, write_log, StateRow};
pub use replay::{load_replay_inputs, replay_dataset, replay_inputs, ReplayInputs};
pub use run::{run_simulation, run_trials, RecordedInputs, RunLog, Snapshot};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("step {step} (t = {t}): {msg}")]
    Numeric { step: usize, t: f64, msg: String },
}

impl HarnessError {
    /// Machine-readable error class.
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Parse { .. } => "parse",
            HarnessError::Numeric { .. } => "numeric",
        }
    }

    /// Process exit code for the category.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io { .. } => 3,
            HarnessError::Parse { .. } => 4,
            HarnessError::Numeric { .. } => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn numeric(step: usize, t: f64, err: impl std::fmt::Display) -> Self {
        HarnessError::Numeric {
            step,
            t,
            msg: err.to_string(),
        }
    }
}
