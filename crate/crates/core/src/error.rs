use crate::spectral::{DispersionModel, ModeIndex};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {mode} has dimension {got}, model expects {expected}")]
    DimensionMismatch {
        mode: ModeIndex,
        expected: usize,
        got: usize,
    },
    #[error("mode {0} has zero first component and carries no data")]
    InactiveMode(ModeIndex),
    #[error("triad constraint violated: {k} + {l} != {n}")]
    TriadMismatch {
        n: ModeIndex,
        k: ModeIndex,
        l: ModeIndex,
    },
    #[error("mode {mode} lies outside the truncation |n_j| <= {nmax}")]
    OutsideTruncation { mode: ModeIndex, nmax: i32 },
    #[error(
        "spectrum regularity s = {available} does not reach the {model} requirement s > {required} \
         (increase alpha above {alpha_threshold})"
    )]
    Regularity {
        model: DispersionModel,
        required: f64,
        available: f64,
        alpha_threshold: f64,
    },
    #[error("solver produced a non-finite coefficient at t = {time}")]
    BlowUp { time: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
