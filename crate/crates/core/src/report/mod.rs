//! Configuration, experiment pipelines and file output for the command-line tool.

pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod svg;
pub mod verdict;

pub use commands::{run_command, Command, CommandOutcome};
pub use config::{ExperimentConfig, Overrides, Resolved};
pub use output::{OutputDir, Provenance};
pub use verdict::{verdict_from_csv, RatioReport, RatioRow, Verdict};
