//! Batch experiment driver for the fedrank simulator: config parsing, the
//! four subcommands, and the built-in property suite.

pub mod checks;
pub mod commands;
pub mod config;
pub mod report;
