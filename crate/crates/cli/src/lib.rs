//! Library side of the `setsel` command-line tool.

pub mod attack;
pub mod commands;
pub mod config;
pub mod error;

pub use error::{CliError, Result};
