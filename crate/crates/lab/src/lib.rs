//! Command-line harness around `plasticity-core`: dataset loading, run
//! configuration, persistence and plotting.

pub mod config;
pub mod error;
pub mod formats;
pub mod idx;
pub mod run;
pub mod svg;
pub mod plot;
pub mod toy;
pub mod commands;

pub use error::{LabError, LabResult};
