//! Config-driven experiments: YAML-subset configs, grid search, results
//! files and the comparison table.

mod config;
mod report;
mod runner;
pub mod yaml;

pub use config::{
    parse_config, render_config, DataConfig, ExperimentConfig, GridPoint, HyperValue, Meta, ModelConfig,
    DEFAULT_SMOOTHING, DEFAULT_TOP_K,
};
pub use report::{read_results_file, report_table, write_results_file, ResultRow, ResultsFile};
pub use runner::{
    load_dataset, results_file_name, run_experiment, RunError, RunOptions, RunSummary, RESULTS_ROOT_ENV,
};
