//! Command-line experiment harness: configuration, presets and reports.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{
    parse_config_file, parse_config_str, ConfigFile, Experiment, ExperimentConfig, OutputFormat, Overrides,
};
pub use experiments::run_experiment;
pub use report::{emit_report, Cell, Report, Table};
