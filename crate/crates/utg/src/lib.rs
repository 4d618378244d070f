//! Harness for the tagless-gate simulator: TOML configuration, CIR dataset
//! files, model files, experiment orchestration, reports and traces.

pub mod config;
pub mod dataset;
pub mod error;
pub mod model_io;
pub mod pipeline;
pub mod report;
pub mod traces;

pub use config::ExperimentConfig;
pub use error::{ConfigError, HarnessError};
pub use report::MetricsReport;
