//! Orchestration: configuration, the two-stage training loop, evaluation,
//! checkpoints, metrics persistence, dataset materialization and the
//! prefill cost model.

pub mod checkpoint;
pub mod config;
pub mod cost;
pub mod eval;
pub mod manifest;
pub mod metrics;
pub mod stats;
pub mod train;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::gatenet::GateError;
use crate::group_rl::RlError;
use crate::oracle::OracleError;
use crate::synthgen::GenError;
use crate::tokenstream::StreamError;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{Schedule, StageConfig, TrainConfig};
pub use cost::{prefill_cost, speedup, CostModel};
pub use eval::{compress, evaluate, EvalReport};
pub use metrics::{read_metrics, MetricRecord, MetricsWriter};
pub use train::{train, TrainOutcome};

/// Process exit codes for the CLI.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("numeric abort at iteration {iteration}: {reason} (state dumped to {})", dump.display())]
    NumericAbort {
        iteration: u64,
        reason: String,
        dump: PathBuf,
    },
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Gen(GenError::InvalidConfig(_)) => {
                exit_code::CONFIG
            }
            HarnessError::NumericAbort { .. }
            | HarnessError::Rl(RlError::NonFiniteGradient { .. }) => exit_code::NUMERIC,
            _ => exit_code::DATA,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
