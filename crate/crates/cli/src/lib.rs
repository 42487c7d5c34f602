//! Dataset IO, run directories and the `bsc` command line on top of
//! `bsc-core`.

pub mod app;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fsutil;
pub mod parallel;
pub mod report;
pub mod rundir;

pub use error::{CliError, Result};
