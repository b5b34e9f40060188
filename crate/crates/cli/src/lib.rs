//! Orchestration for the annealing benchmark: configuration, instance files,
//! run logs and analysis tables.

pub mod analysis;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod store;

pub use config::BenchmarkConfig;
pub use error::{CliError, Outcome};
