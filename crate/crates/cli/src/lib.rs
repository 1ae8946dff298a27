//! Command-line pipeline around the `ebmddg` library: configuration, run
//! directories with manifests, and one function per command.

pub mod cli;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod fixture;
pub mod models;
pub mod run;

pub use cli::{run, Cli, Command};
pub use config::RunConfig;
pub use error::CliError;
