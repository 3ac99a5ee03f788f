//! Command-line front end for split-select-retrain experiments: config
//! loading, dataset files, selection runs and reports.

pub mod config;
pub mod exec;
pub mod io;
pub mod pipeline;

pub use config::{ConfigError, Env, ExperimentConfig};
pub use exec::Workers;
pub use pipeline::{run, PipelineError};
