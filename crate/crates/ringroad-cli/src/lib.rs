//! Implementation of the `ringroad` command-line interface: configuration
//! resolution, deterministic table output, and the per-subcommand drivers.

pub mod commands;
pub mod config;
pub mod table;
