//! Simulation lab for policy-gradient dynamics on categorical softmax
//! policies.
//!
//! The crate models a single unconditional softmax policy over a vocabulary
//! and trains it with REINFORCE or contrastive minimum risk training (CMRT)
//! against token-level rewards. Around that core it provides exact
//! analytics for a three-outcome counterexample on which CMRT converges away
//! from the reward maximiser, peakiness and rank analytics over policy
//! snapshots, and a seeded experiment runner with CSV / JSON-lines output.

pub mod cli;
pub mod counterexample;
pub mod error;
pub mod estimators;
pub mod io;
pub mod lab;
pub mod metrics;
pub mod optim;
pub mod policy;
pub mod report;
pub mod rewards;
pub mod rng;

pub use error::{LabError, Result};
pub use policy::{GradientVector, PolicyLogits, SampleBatch, TokenId, VocabDistribution};
pub use rewards::RewardSpec;
pub use rng::RngStream;
