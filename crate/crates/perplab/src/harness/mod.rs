//! Configuration parsing, experiment dispatch, and report writing.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{parse_config, resolve, ConfigError, ExperimentConfig, ResolvedConfig};
pub use runner::{run, RunError, RunOutput};
