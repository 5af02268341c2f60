//! Batch experiment driver for the `stablesde` library: config parsing, the
//! experiment registry, and reproducible result files.

pub mod config;
pub mod error;
pub mod experiments;
pub mod runner;

pub use config::{validate_config, Experiment, ExperimentConfig};
pub use error::{ConfigError, RunError};
pub use runner::{replay, run, RunManifest, RunOptions};
