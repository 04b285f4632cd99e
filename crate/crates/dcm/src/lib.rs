//! File formats, reports, parallel study drivers and the command line for
//! `dcm-core`.

pub mod cli;
pub mod error;
pub mod io;
pub mod lr;
pub mod report;
pub mod studies;

pub use error::{CliError, ErrorRecord, Result};
