//! Command-line companion to `optoshake-core`: TOML run configurations,
//! parameter resolution from laboratory units, batch execution and CSV/JSON
//! output. The binary in this crate is a thin argument parser over
//! [`commands`]; everything it does is callable as a library.

pub mod commands;
pub mod config;
pub mod csvout;
pub mod errors;
pub mod resolve;
pub mod runner;
