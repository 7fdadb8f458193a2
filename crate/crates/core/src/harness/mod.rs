//! Experiment orchestration behind the `tsch-ppg` binary: configuration
//! files, the convergence and scaling experiments, evaluation of stored
//! policies, CSV tables and SVG charts.
//!
//! Runs execute one after another in a fixed order (algorithm, node count,
//! seed), so a configuration file and seed offset determine every output
//! byte.

mod config;
mod experiments;
mod plot;
mod selftest;

pub use config::{Algorithm, ExperimentConfig, FadingKind, OutputConfig, ScenarioConfig, SweepConfig};
pub use experiments::{
    median, quantile, run_convergence, run_evaluate, run_scaling, ConvergenceRun, EvaluationRow, ScalingRow,
    CONVERGENCE_HEADER, EVALUATION_HEADER, SCALING_HEADER,
};
pub use plot::{emit_plot, Axes, Series};
pub use selftest::{selftest, Check};
