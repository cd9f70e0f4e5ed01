//! File formats, simulation studies and the command line around
//! `transport-tmle-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod study;

pub use config::{EstimatorConfig, Overrides, RunConfig};
pub use error::{Error, Result};
