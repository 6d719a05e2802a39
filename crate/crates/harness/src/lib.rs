//! Desk-scale harness around `fba2d-core`: synthetic dataset, surrogate
//! training, batch attacks and benchmark summaries.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
