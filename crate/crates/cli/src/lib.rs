//! File formats, run configuration and subcommands of the `labelnorm`
//! command-line tool.

pub mod commands;
pub mod config;
pub mod io;
