//! Hyperparameter search with a Tree-structured Parzen Estimator, plus the
//! training-protocol math (schedule, early stopping, smoothed loss, clipping).

mod protocol;
mod space;
mod study;
mod tpe;

use thiserror::Error;

pub use protocol::{clip_scale, cosine_lr, label_smooth_ce, EarlyStopping, ProtocolConfig, TunedHyperparameters};
pub use space::{Assignment, DimKind, Dimension, ParamValue, SearchSpace};
pub use study::{best, load_jsonl, observe, run_study, synthetic_objective, Study, TrialRecord, TrialState};
pub use tpe::{suggest, TpeConfig};

#[derive(Debug, Error)]
pub enum HpoError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension {dimension}: {reason}")]
    OutOfBounds { dimension: String, reason: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("no completed trials")]
    Empty,
    #[error("study file {path}: {reason}")]
    Persistence { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, HpoError>;
