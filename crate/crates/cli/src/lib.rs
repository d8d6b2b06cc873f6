//! Command-line front end for `ensemble-calib`: config parsing, study
//! execution with CSV output, standalone calibration and prior-quality
//! estimates, and SVG plots of study summaries.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod plot;

pub use error::{CliError, Result};
