//! Experiment pipeline: configuration, artifacts and the CLI commands.

mod artifacts;
mod commands;
mod config;

pub use artifacts::*;
pub use commands::*;
pub use config::{EstimateConfig, ExcitationConfig, ExperimentConfig, OptimizerConfig, ReduceConfig, Seeds, SimulateConfig, TrainSection};
