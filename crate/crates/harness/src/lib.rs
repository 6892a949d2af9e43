//! Experiment harness for counterfactual KPI estimation: environments,
//! dataset logging, repeated calibration trials, metrics and reports.

pub mod config;
pub mod dataset;
pub mod env;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod report;
pub mod seed;

pub use config::{EnvKind, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, ExperimentReport, ExperimentSpec, Method};

/// Builds the configured environment and runs the experiment.
pub fn run_config(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.environment {
        EnvKind::Mac => {
            let (env, spec) = cfg.mac_env()?;
            run_experiment(&env, &spec)
        }
        EnvKind::Phy => {
            let (env, spec) = cfg.phy_env()?;
            run_experiment(&env, &spec)
        }
        EnvKind::Synthetic => {
            let (env, spec) = cfg.synthetic_env()?;
            run_experiment(&env, &spec)
        }
    }
}
