//! Command-line front end for the loop-detector toolkit: configuration
//! documents, file formats and the subcommand pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use config::{InputSpec, RunConfig};
pub use error::CliError;
