//! Batch driver for the dust-Einstein evolution: run configuration, run
//! orchestration with CSV/checkpoint output, plot-data extraction and the
//! verification suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod plotdata;
pub mod run;
pub mod verify;

pub use config::RunConfig;
pub use error::CliError;
