//! Command-line front end for flowcap. The binary is a thin wrapper over
//! [`commands::run`]; experiments and validation are usable as a library.

pub mod cli;
pub mod commands;
pub mod error;
pub mod experiments;
pub mod io;
pub mod manifest;
pub mod validate;

pub use error::{CliError, CliResult};
