//! Experiment grids, reports, scaling fits and instance property suites.

mod config;
mod report;
mod run;
mod scaling;
pub mod verify;

pub use config::{
    apply_overrides, AlgorithmId, AlgorithmSpec, ExperimentConfig, InstanceKind, NoiseKind, NoiseSpec, OutputFormat,
    QueryMetric, ScalingAxis, ScalingSpec,
};
pub use report::{emit, read_csv, write_csv, write_json, ReportRow, COLUMNS};
pub use run::{default_parallelism, run_experiment, PARALLELISM_ENV};
pub use scaling::{fit_power_law, scaling_study, PowerFit, ScalingPoint, ScalingReport};
