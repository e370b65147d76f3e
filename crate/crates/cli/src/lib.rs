//! Experiment harness: dataset generation, training, evaluation, statistics
//! and comparison tables.

pub mod commands;
pub mod config;

pub use config::{DataRef, Mode, RunConfig};
