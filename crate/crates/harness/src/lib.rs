//! Experiment harness for structured conformalized matrix completion:
//! synthetic data generators, the MovieLens ingestion pipeline, experiment
//! orchestration and plot-ready metrics output.

pub mod config;
pub mod error;
pub mod experiment;
pub mod gen;
pub mod movielens;
pub mod output;
pub mod slab;

pub use config::{ExperimentConfig, Mode};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, MetricsRow};
