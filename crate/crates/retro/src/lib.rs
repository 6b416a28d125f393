//! File formats, snapshots and the command-line pipeline around `retro-core`.
//!
//! Every artifact is written atomically. Text formats are JSON Lines with
//! shortest round-trip float formatting, so rerunning a stage on identical
//! inputs reproduces its output byte for byte.

pub mod binary;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod fsio;

pub use error::{CliError, CliResult};
