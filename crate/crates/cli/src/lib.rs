//! Command-line harness: table persistence, fidelity metrics and the
//! report-producing sweep commands.

pub mod commands;
pub mod error;
pub mod metrics;
pub mod report;
pub mod tablefile;

pub use error::{CliError, Result};
