//! Monte-Carlo SNR sweeps, single-trial dumps, and the closed-form
//! complexity reporter.

mod complexity;
mod config;
mod sweep;

pub use complexity::{complexity_report, ComplexityConstants, ComplexityReport, StageCost};
pub use config::{EstimatorKind, SimConfig, Snr, SweepSettings};
pub use sweep::{
    run_sweep, run_trial, write_csv, EstimatorReport, Execution, SweepRow, SweepTable, TrialReport, CSV_HEADER,
};
