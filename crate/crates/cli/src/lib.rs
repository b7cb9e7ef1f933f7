//! Experiment harness: configuration, run manifests and the `train`, `sweep`,
//! `recover` and `plot` commands.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod output;

pub use commands::{cmd_plot, cmd_recover, cmd_sweep, cmd_train, Context};
pub use config::{derive_seed, ExperimentConfig};
pub use manifest::RunManifest;
