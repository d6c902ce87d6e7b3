//! Experiment harness for NC-GRU models: JSON configs, the training loop,
//! ablations, metric CSVs, checkpoints and task export.
//!
//! The numerical core lives in [`ncgru_core`]; this crate adds IO.

pub mod checkpoint;
pub mod config;
pub mod gen;
pub mod harness;
pub mod metrics;

pub use ncgru_core as core;

pub use checkpoint::Checkpoint;
pub use config::ExperimentConfig;
pub use harness::{run_ablation, run_training, train, AblationMode, Diverged, RunOutput};
pub use metrics::MetricRow;
