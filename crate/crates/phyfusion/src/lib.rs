//! Monte Carlo engine, JSON configuration, CSV output and the command-line
//! driver built on `phyfusion-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod sim;

pub use config::{ExperimentConfig, PolicyKind};
pub use error::AppError;
