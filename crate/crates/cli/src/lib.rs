//! Experiment runner for morphevo: configuration, seeded multi-run
//! orchestration with checkpoints, archive and trace files, sweeps,
//! heatmaps and statistics reports.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod svg;

pub use error::{CliError, CliResult};
