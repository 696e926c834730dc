//! Experiment harness behind the `selfsync` binary.

pub mod config;
mod error;
pub mod experiments;

pub use error::{CliError, CliResult};
