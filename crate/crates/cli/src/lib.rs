//! Library half of the `varjet` binary: argument definitions, subcommands
//! and report output.

pub mod commands;
pub mod report;

pub use commands::{run, Cli, CliError};
