//! Configuration, dataset IO and experiment orchestration for the `sdcn`
//! command-line tool.

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod probe;
pub mod synth;

pub use error::{CliError, Result};
