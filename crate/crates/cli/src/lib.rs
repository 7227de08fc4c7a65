//! Experiment harness for the phase-retrieval library: versioned JSON
//! configs, experiment orchestration, and artifact persistence.

pub mod config;
pub mod experiments;

pub use config::{ExperimentConfig, ExperimentKind, RunManifest, CONFIG_VERSION};
pub use experiments::{convert_raster, read_trace, run_experiment};
