//! Command-line front end for `mapcons`: file formats, run configuration and
//! the subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod pgm;

pub use cli::{run, Cli, Command};
pub use error::{CliError, CliResult};
