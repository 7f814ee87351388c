//! Command-line front end for `onsager-core`: experiment configs, the
//! `onsager` subcommands and the file formats they read and write.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::CliError;
