//! Experiment orchestration: configs, BO loops, regret traces, aggregation
//! and the ground-truth cache behind the `robust-bo` command line tool.

pub mod config;
pub mod run;
pub mod trace;

pub use config::{default_initial_points, ExperimentConfig, HyperparameterMode, ObjectiveConfig};
pub use run::{
    cache_dir, cached_ground_truth, initial_design, run_experiment, run_repetition, write_outcome,
    ExperimentOutcome, RunSettings, RunSummary, CACHE_ENV,
};
pub use trace::{aggregate, AggregateRow, RegretTrace, TraceRecord};
