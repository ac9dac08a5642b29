//! Experiment runner: configs in, report files out.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{parse_config, parse_config_str, EmbeddingSource, ExperimentConfig, TaskSource};
pub use report::emit_reports;
pub use runner::{
    aggregate, cell_seed, run_cell, run_experiment, Aggregates, CellError, CellKey, EmbeddingAggregate,
    RunMatrixResult, TaskAggregate,
};
