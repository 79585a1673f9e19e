//! File-based front end: simulate datasets, train calibration models and
//! run leave-one-session-out evaluations.

pub mod commands;
pub mod config;
pub mod dataset;
mod error;

pub use error::{CliError, Result};
