//! Command-line front end: run configuration, bit-exact output containers
//! and the command implementations behind the `tsm` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
