//! One-update studies of how a single sampled step reshapes a policy.

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::estimators::{cmrt_combination, reinforce_combination, Baseline, CmrtParams};
use crate::lab::config::{EstimatorSpec, ExperimentConfig};
use crate::lab::train::{build_reward, initial_logits};
use crate::metrics::{peakiness, PeakinessReport};
use crate::policy::{PolicyLogits, SampleBatch, ScoreCombination, TokenId, VocabDistribution};
use crate::report::csv_bytes;
use crate::rewards::RewardSpec;
use crate::rng::{RngStream, TRAIN_STREAM};

/// Peakiness before one update and its change across the update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingleStepDelta {
    pub init: usize,
    pub top10_mass_before: f64,
    pub delta_top10_mass: f64,
    pub mode_prob_before: f64,
    pub delta_mode_prob: f64,
    pub entropy_before: f64,
    pub delta_entropy: f64,
}

impl SingleStepDelta {
    fn between(init: usize, before: PeakinessReport, after: PeakinessReport) -> Self {
        SingleStepDelta {
            init,
            top10_mass_before: before.top_k_mass,
            delta_top10_mass: after.top_k_mass - before.top_k_mass,
            mode_prob_before: before.mode_prob,
            delta_mode_prob: after.mode_prob - before.mode_prob,
            entropy_before: before.entropy_nats,
            delta_entropy: after.entropy_nats - before.entropy_nats,
        }
    }
}

fn combination(
    spec: &EstimatorSpec,
    dist: &VocabDistribution,
    batch: &SampleBatch,
    reward: &RewardSpec,
) -> Result<ScoreCombination> {
    match spec {
        EstimatorSpec::Reinforce { baseline, .. } => {
            reinforce_combination(dist, batch, reward, Baseline::new(*baseline)?)
        }
        EstimatorSpec::Cmrt { alpha, dedup, .. } => {
            cmrt_combination(dist, batch, reward, CmrtParams::new(*alpha, *dedup)?)
        }
    }
}

/// Peakiness after one update of `logits` along `batch`.
pub fn step_along(
    logits: &PolicyLogits,
    batch: &SampleBatch,
    reward: &RewardSpec,
    estimator: &EstimatorSpec,
    lr: f64,
    top_k: usize,
) -> Result<PeakinessReport> {
    let dist = logits.to_distribution();
    let comb = combination(estimator, &dist, batch, reward)?;
    let mut next = logits.clone();
    next.apply_combination(&dist, &comb, lr)?;
    peakiness(&next.to_distribution(), top_k)
}

/// For `n_inits` initial policies (repetitions `0..n_inits` of the config's
/// init), samples one batch, applies one update and records the change.
/// The config's `steps` and `repetitions` are ignored.
pub fn single_step_study(config: &ExperimentConfig, n_inits: usize) -> Result<Vec<SingleStepDelta>> {
    if n_inits == 0 {
        return Err(LabError::Config("n_inits must be at least 1".into()));
    }
    config.validate()?;
    (0..n_inits)
        .into_par_iter()
        .map(|i| {
            let logits = initial_logits(config, i)?;
            let dist = logits.to_distribution();
            let reward = build_reward(config, &dist)?;
            let mut rng = RngStream::for_repetition(config.master_seed, i as u64, TRAIN_STREAM);
            let batch = dist.sample(config.estimator.k(), &mut rng)?;
            let before = peakiness(&dist, config.metric_top_k)?;
            let after = step_along(&logits, &batch, &reward, &config.estimator, config.lr, config.metric_top_k)?;
            Ok(SingleStepDelta::between(i, before, after))
        })
        .collect()
}

/// Exact expected change in peakiness after one single-sample REINFORCE
/// step, by summing over every token weighted by its probability.
pub fn expected_single_sample_delta(
    logits: &PolicyLogits,
    reward: &RewardSpec,
    baseline: Baseline,
    lr: f64,
    top_k: usize,
) -> Result<SingleStepDelta> {
    let dist = logits.to_distribution();
    let before = peakiness(&dist, top_k)?;
    let estimator = EstimatorSpec::Reinforce { k: 1, baseline: baseline.value };
    let mut mean = PeakinessReport {
        mode_prob: 0.0,
        top_k_mass: 0.0,
        entropy_nats: 0.0,
    };
    for (j, &p) in dist.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let batch = SampleBatch::new(vec![TokenId(j)])?;
        let after = step_along(logits, &batch, reward, &estimator, lr, top_k)?;
        mean.mode_prob += p * after.mode_prob;
        mean.top_k_mass += p * after.top_k_mass;
        mean.entropy_nats += p * after.entropy_nats;
    }
    Ok(SingleStepDelta::between(0, before, mean))
}

pub fn deltas_csv(deltas: &[SingleStepDelta]) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "init",
            "top10_mass_before",
            "delta_top10_mass",
            "mode_prob_before",
            "delta_mode_prob",
            "entropy_before",
            "delta_entropy",
        ],
        deltas.iter().map(|d| {
            [
                d.init.to_string(),
                d.top10_mass_before.to_string(),
                d.delta_top10_mass.to_string(),
                d.mode_prob_before.to_string(),
                d.delta_mode_prob.to_string(),
                d.entropy_before.to_string(),
                d.delta_entropy.to_string(),
            ]
        }),
    )
}
