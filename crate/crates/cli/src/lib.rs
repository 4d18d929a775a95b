//! Batch front end: run configurations, subcommand pipelines and manifests.

pub mod config;
pub mod pipeline;

pub use config::{parse_config, ConfigError, RunConfig};
pub use pipeline::{run, RunError, RunFailure, RunManifest, RunOptions, Subcommand};
