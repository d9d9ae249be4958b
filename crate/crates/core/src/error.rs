use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite state at t = {t}: x = {x}, v = {v}")]
    InvalidState { t: f64, x: f64, v: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("step budget ({max_steps}) exhausted at t = {t}; integration diverged or tolerances too tight")]
    StepBudget { t: f64, max_steps: usize },

    #[error("solution blew up; last good time t = {t}")]
    BlowUp { t: f64 },

    #[error("gain synthesis failed: {0}")]
    Synthesis(String),

    #[error("empty training data")]
    EmptyData,

    #[error("parameter shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("relative-error metric undefined: all {n_excluded} window samples excluded by the zero guard")]
    UndefinedMetric { n_excluded: usize },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed record {path}: {msg}")]
    Record { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
