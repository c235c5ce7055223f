//! Library side of the `niq` command: configuration, subcommands and report
//! output.

pub mod app;
pub mod commands;
pub mod config;
pub mod exit;
pub mod output;
