//! Command-line front end: configuration parsing, dispatch and file output.

pub mod config;
pub mod error;
pub mod run;
pub mod verify;

pub use config::{parse_config, Command, OutputFormat, RunConfig, OUT_DIR_ENV};
pub use error::CliError;
pub use run::{execute, read_point, Execution};
