//! Experiment orchestration: configuration, truth simulation, ground truth,
//! single runs, parameter sweeps and result tables.

pub mod config;
mod experiment;
pub mod output;
mod simulate;

pub use config::{ExperimentConfig, FilterConfig, ModelConfig, ModelKind, OtChoice, RunConfig};
pub use experiment::{
    build_ground_truth, reference_ground_truth, Experiment, Grid, GridResult, Metric, RunResult,
    RunRow, Spread, REFERENCE_REPLICA,
};
pub use output::{write_grid_summary, write_ground_truth_csv, write_run_rows, RunWriter};
pub use simulate::{build_model, simulate_truth, st_transform, Truth};
