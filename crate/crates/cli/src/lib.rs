//! Command implementations behind the `patchgrow` binary.

pub mod commands;
pub mod sweep;

pub use commands::{CliError, CliResult};
