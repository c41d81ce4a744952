//! Experiment orchestration: configuration, policy initialisation, training
//! loops, single-step studies and persisted outputs.

pub mod config;
pub mod init;
pub mod single_step;
pub mod train;

pub use config::{EstimatorSpec, ExperimentConfig, InitSpec, LogitFamily, RewardSource};
pub use init::{load_logits, synth_init};
pub use single_step::{single_step_study, SingleStepDelta};
pub use train::{run_repetition, run_training, MetricRow, RepetitionResult, RunOutput};
