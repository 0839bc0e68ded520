//! Command implementations behind the `ggd` binary.

pub mod commands;
pub mod diagnose;
pub mod error;
pub mod manifest;
pub mod settings;

pub use error::CliError;
