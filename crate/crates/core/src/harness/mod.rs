//! Experiment configuration, seeded sweeps, theory tables, oracle suites
//! and CSV output.

use thiserror::Error;

pub mod config;
pub mod output;
pub mod sweep;
pub mod tables;
pub mod verify;

pub use config::{ConfigError, ExperimentConfig, RadiusSpec, SourceSpec};
pub use sweep::{run_trial, sweep, sweep_figure1, sweep_figure2, Experiment, GridPoint, SweepRow, SweepSummary};
pub use tables::{theory_table, TheoryRow};
pub use verify::{verify, Suite, VerifyReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Model(#[from] crate::obs_model::ModelError),
    #[error(transparent)]
    Simulation(#[from] crate::cascade_sim::SimError),
    #[error(transparent)]
    Estimator(#[from] crate::estimator::EstimatorError),
    #[error(transparent)]
    Theory(#[from] crate::theory::TheoryError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
