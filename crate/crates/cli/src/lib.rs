//! Command-line front end: configuration loading and the `train`, `eval`,
//! `replay` and `genroutes` subcommands.
//!
//! Exit codes: 0 on success, 2 for usage or configuration problems (including
//! missing files and checkpoints), 3 when training diverges, 1 otherwise.

pub mod commands;
pub mod config;
mod error;

pub use commands::{run, Cli, Command};
pub use config::{RunConfig, ENV_PREFIX};
pub use error::{CliError, EXIT_CONFIG, EXIT_FAILURE, EXIT_NUMERIC, EXIT_OK};
