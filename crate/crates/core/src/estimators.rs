//! Gradient estimators over a [`VocabDistribution`].
//!
//! * REINFORCE: `(1/k) Σ (r(y_i) − b) ∇log P(y_i)` over the sampled batch.
//! * CMRT: the gradient of `R̃(θ, S) = Σ_{y∈S} Q(y) r(y)`, where
//!   `Q(y) = P(y)^α / Σ_{y'∈S} P(y')^α` renormalises the policy over the
//!   sample.
//! * The exact gradient of the expected reward, `P(j)(r(j) − R(θ))`, used as
//!   the reference both estimators are measured against.
//!
//! All gradients are ascent directions in logit space.

use crate::error::{LabError, Result};
use crate::policy::{GradientVector, SampleBatch, ScoreCombination, TokenId, VocabDistribution};
use crate::rewards::RewardSpec;

/// Smoothing exponent and deduplication switch for CMRT.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CmrtParams {
    pub alpha: f64,
    pub dedup: bool,
}

impl CmrtParams {
    pub fn new(alpha: f64, dedup: bool) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(LabError::invalid(format!("alpha must be positive, got {alpha}")));
        }
        Ok(CmrtParams { alpha, dedup })
    }
}

impl Default for CmrtParams {
    fn default() -> Self {
        CmrtParams {
            alpha: 0.005,
            dedup: true,
        }
    }
}

/// Constant subtracted from every REINFORCE reward.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Baseline {
    pub value: f64,
}

impl Baseline {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(LabError::invalid("baseline must be finite"));
        }
        Ok(Baseline { value })
    }
}

fn check_batch(dist: &VocabDistribution, batch: &SampleBatch) -> Result<()> {
    if batch.is_empty() {
        return Err(LabError::invalid("empty sample batch"));
    }
    batch.tokens().iter().try_for_each(|&t| dist.check_token(t))
}

/// REINFORCE coefficients: one term per draw, duplicates counted per
/// occurrence.
pub fn reinforce_combination(
    dist: &VocabDistribution,
    batch: &SampleBatch,
    reward: &RewardSpec,
    baseline: Baseline,
) -> Result<ScoreCombination> {
    check_batch(dist, batch)?;
    reward.check_compatible(dist.vocab_size())?;
    let inv_k = 1.0 / batch.len() as f64;
    let mut comb = ScoreCombination::new();
    for &y in batch.tokens() {
        comb.push(y, (reward.value_at(y) - baseline.value) * inv_k);
    }
    Ok(comb)
}

pub fn reinforce_gradient(
    dist: &VocabDistribution,
    batch: &SampleBatch,
    reward: &RewardSpec,
    baseline: Baseline,
) -> Result<GradientVector> {
    reinforce_combination(dist, batch, reward, baseline)?.materialize(dist)
}

/// `R(θ) = Σ_y P(y) r(y)`.
pub fn exact_expected_reward(dist: &VocabDistribution, reward: &RewardSpec) -> Result<f64> {
    reward.check_compatible(dist.vocab_size())?;
    Ok(dist
        .probs()
        .iter()
        .enumerate()
        .map(|(j, p)| p * reward.value_at(TokenId(j)))
        .sum())
}

/// `∂R/∂θ_j = P(j) (r(j) − R(θ))`.
pub fn exact_reward_gradient(dist: &VocabDistribution, reward: &RewardSpec) -> Result<GradientVector> {
    let big_r = exact_expected_reward(dist, reward)?;
    let values = dist
        .probs()
        .iter()
        .enumerate()
        .map(|(j, p)| p * (reward.value_at(TokenId(j)) - big_r))
        .collect();
    GradientVector::new(values)
}

/// The sample-restricted distribution `Q` over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct QWeights {
    /// Batch entries the weights refer to: distinct tokens in order of first
    /// occurrence under dedup, every draw otherwise.
    pub support: Vec<TokenId>,
    pub weights: Vec<f64>,
}

impl QWeights {
    /// `E_Q[r]`.
    pub fn expected(&self, reward: &RewardSpec) -> f64 {
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(&t, q)| q * reward.value_at(t))
            .sum()
    }
}

/// `Q(y_i) = P(y_i)^α / Σ_j P(y_j)^α`, evaluated in log space.
pub fn q_weights(dist: &VocabDistribution, batch: &SampleBatch, params: CmrtParams) -> Result<QWeights> {
    check_batch(dist, batch)?;
    let support = if params.dedup {
        batch.unique()
    } else {
        batch.tokens().to_vec()
    };
    let mut logs = Vec::with_capacity(support.len());
    for &t in &support {
        let p = dist.probs()[t.0];
        if p <= 0.0 {
            return Err(LabError::Degenerate(format!(
                "sampled token {t} has zero probability"
            )));
        }
        logs.push(params.alpha * p.ln());
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= z;
    }
    Ok(QWeights { support, weights })
}

/// `R̃(θ, S) = E_Q[r]` for a fixed sample.
pub fn cmrt_objective(
    dist: &VocabDistribution,
    batch: &SampleBatch,
    reward: &RewardSpec,
    params: CmrtParams,
) -> Result<f64> {
    reward.check_compatible(dist.vocab_size())?;
    Ok(q_weights(dist, batch, params)?.expected(reward))
}

/// CMRT coefficients `α Q(y_i) (r(y_i) − E_Q[r])` over the Q support.
pub fn cmrt_combination(
    dist: &VocabDistribution,
    batch: &SampleBatch,
    reward: &RewardSpec,
    params: CmrtParams,
) -> Result<ScoreCombination> {
    reward.check_compatible(dist.vocab_size())?;
    let q = q_weights(dist, batch, params)?;
    let mean = q.expected(reward);
    let mut comb = ScoreCombination::new();
    for (&t, &w) in q.support.iter().zip(&q.weights) {
        comb.push(t, params.alpha * w * (reward.value_at(t) - mean));
    }
    Ok(comb)
}

/// `∇R̃` in the simplified form `α Σ Q(y_i)(r(y_i) − E_Q[r]) ∇log P(y_i)`.
///
/// Debug builds also evaluate the two-term form (see [`cmrt_gradient_two_term`])
/// and assert agreement.
pub fn cmrt_gradient(
    dist: &VocabDistribution,
    batch: &SampleBatch,
    reward: &RewardSpec,
    params: CmrtParams,
) -> Result<GradientVector> {
    let grad = cmrt_combination(dist, batch, reward, params)?.materialize(dist)?;
    #[cfg(debug_assertions)]
    {
        let other = cmrt_gradient_two_term(dist, batch, reward, params)?;
        let scale = 1.0 + grad.norm();
        debug_assert!(
            grad.max_abs_diff(&other) <= 1e-10 * scale,
            "CMRT gradient forms disagree by {}",
            grad.max_abs_diff(&other)
        );
    }
    Ok(grad)
}

/// `∇R̃ = α Σ Q(y_i) r(y_i) ∇log P(y_i) − E_Q[r] ∇log Z(S)` with
/// `Z(S) = Σ_i P(y_i)^α`, assembled from dense score vectors.
pub fn cmrt_gradient_two_term(
    dist: &VocabDistribution,
    batch: &SampleBatch,
    reward: &RewardSpec,
    params: CmrtParams,
) -> Result<GradientVector> {
    reward.check_compatible(dist.vocab_size())?;
    let q = q_weights(dist, batch, params)?;
    let n = dist.vocab_size();
    let mut weighted = GradientVector::zeros(n);
    // ∇log Z = Σ_i α P_i^α ∇log P_i / Z = α Σ_i Q_i ∇log P_i
    let mut grad_log_z = GradientVector::zeros(n);
    for (&t, &w) in q.support.iter().zip(&q.weights) {
        let score = dist.log_prob_gradient(t)?;
        weighted.add_scaled(&score, params.alpha * w * reward.value_at(t));
        grad_log_z.add_scaled(&score, params.alpha * w);
    }
    weighted.add_scaled(&grad_log_z, -q.expected(reward));
    Ok(weighted)
}
