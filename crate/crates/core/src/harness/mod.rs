//! Experiment orchestration: TOML configurations, regularization sweeps
//! `eps_i = eps0 * 2^{-i}`, and persisted reports.

mod config;
mod report;
mod sweep;

pub use config::{
    load_config, CalibrationSection, DomainSection, ExperimentConfig, OutputSection, ParamsSection,
    RunSection, SweepSection, Target, TargetsSection,
};
pub use report::{emit_reports, BOUND_COLUMNS};
pub use sweep::{
    compliance_index, run_sweep, variational_gaps, CaccioppoliRecord, FailureRecord, GapRecord,
    LocalBoundSummary, SolveManifest, SweepItem, SweepReport, SweepRun, TargetReport,
    GAP_TOLERANCE,
};

use thiserror::Error;

use crate::degiorgi::DeGiorgiError;
use crate::grid::GridError;
use crate::model::ModelError;
use crate::solver::SolverError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        message: String,
    },
    #[error("solve failed at eps index {index}: {source}")]
    Solve { index: usize, source: SolverError },
    #[error("diagnostics failed: {0}")]
    Diagnostics(SolverError),
    #[error(transparent)]
    Analysis(#[from] DeGiorgiError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
