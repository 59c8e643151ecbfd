//! Experiment orchestration: configs and presets, sweeps, per-run records
//! and summary tables.

pub mod config;
pub mod diagnostics;
pub mod report;
pub mod run;

pub use config::{data_root, DataConfig, DatasetId, ExperimentConfig, LoadedData, Scale, Sweep, SweepAxis, PRESETS};
pub use diagnostics::{probe_dynamics, summarize_trace, windowed_proxy, DynamicsProbe, TraceSummary};
pub use report::{aggregate, format_accuracy, SummaryRow};
pub use run::{plan, read_records, run_experiment, run_loaded, run_point, ResultRecord, RunPoint, Stage, StageFailure};
