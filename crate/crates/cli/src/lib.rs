//! Command-line front end for the converter toolchain: `design`, `simulate`
//! and `analyze`.

pub mod app;
pub mod commands;
pub mod scenario;
pub mod si;
pub mod tables;

pub use commands::{CliError, OutputFormat};
