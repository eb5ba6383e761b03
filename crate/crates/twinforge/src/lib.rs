//! File formats, experiment configs and the command implementations behind
//! the `twinforge` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::{CliError, CliResult};
