//! Configuration, orchestration and output of experiments.

pub mod config;
pub mod experiment;
pub mod horizon;

pub use config::{ExperimentConfig, SeedSpec};
pub use experiment::{build_world, checkpoints, emit_csv, read_trace_csv, run_experiment, run_single, ExperimentOutcome};
pub use horizon::{communication_bound, detection_horizon, HorizonInputs, HorizonTerms};
