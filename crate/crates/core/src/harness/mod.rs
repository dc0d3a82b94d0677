//! Experiment orchestration: configuration, trained artifacts, sweeps and
//! CSV output.

pub mod config;
pub mod models;
pub mod output;
pub mod run;

pub use config::{AttackKind, ExperimentConfig, SystemKind};
pub use run::{run_ablation, run_bound_check, run_sweep, BoundCheckOutput, ResultRow, RunOutput, SummaryRow};
