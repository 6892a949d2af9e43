use std::io;

use ccke_core::conformal::ConformalError;
use ccke_core::quantile_net::{CheckpointError, ModelError, TrainError};
use ccke_sim::mac::MacError;
use ccke_sim::phy::PhyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("length mismatch: {what} has {actual} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("no samples to evaluate")]
    Empty,
    #[error("normalizer must be positive and finite, got {value} at sample {index}")]
    InvalidNormalizer { index: usize, value: f64 },
    #[error("insufficient samples under target app {app}: N_a' = {found}, need at least {needed}")]
    InsufficientTargetSamples { app: String, found: usize, needed: usize },
    #[error("app {app} was never selected in {proposals} proposed contexts")]
    RareApp { app: String, proposals: u64 },
    #[error("environment {0} has no closed-form intervals; train a model instead")]
    NoAnalyticModel(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed report: {0}")]
    Report(String),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Mac(#[from] MacError),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
