//! Library side of the `dmm` command: configuration, pipeline assembly,
//! ROC plotting and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod plot;

pub use commands::{run, Cli};
