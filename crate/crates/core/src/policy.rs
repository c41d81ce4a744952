//! Categorical softmax policy over a finite vocabulary.
//!
//! [`PolicyLogits`] holds the trainable parameters, one logit per token. A
//! [`VocabDistribution`] is the normalised softmax of a set of logits and is
//! what sampling, gradients and analytics operate on.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng::RngStream;

/// Absolute tolerance on the total mass of a [`VocabDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Index of a token in the vocabulary.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub usize);

impl TokenId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for TokenId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn check_token(token: TokenId, vocab_size: usize) -> Result<()> {
    if token.0 < vocab_size {
        Ok(())
    } else {
        Err(LabError::TokenOutOfRange {
            token: token.0,
            vocab_size,
        })
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(LabError::invalid(format!(
            "{what} entry {i} is not finite ({})",
            values[i]
        ))),
    }
}

/// Policy parameters: one finite logit per vocabulary entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PolicyLogits {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for PolicyLogits {
    type Error = LabError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        PolicyLogits::new(values)
    }
}

impl From<PolicyLogits> for Vec<f64> {
    fn from(l: PolicyLogits) -> Vec<f64> {
        l.values
    }
}

impl PolicyLogits {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(LabError::invalid("logits must be non-empty"));
        }
        check_finite(&values, "logit")?;
        Ok(PolicyLogits { values })
    }

    /// All-zero logits (the uniform policy).
    pub fn zeros(vocab_size: usize) -> Result<Self> {
        Self::new(vec![0.0; vocab_size])
    }

    pub fn vocab_size(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Largest absolute logit.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Softmax of the logits, computed with max-subtraction.
    pub fn to_distribution(&self) -> VocabDistribution {
        let mut probs = Vec::with_capacity(self.values.len());
        softmax_into(&self.values, &mut probs);
        VocabDistribution { probs }
    }

    /// Overwrites `dist` with the softmax of the logits, reusing its buffer.
    pub(crate) fn distribution_into(&self, dist: &mut VocabDistribution) {
        softmax_into(&self.values, &mut dist.probs);
    }

    /// `θ' = θ + lr · grad`.
    pub fn apply_update(&self, grad: &GradientVector, lr: f64) -> Result<PolicyLogits> {
        let mut next = self.clone();
        next.apply_update_in_place(grad, lr)?;
        Ok(next)
    }

    pub fn apply_update_in_place(&mut self, grad: &GradientVector, lr: f64) -> Result<()> {
        check_lr(lr)?;
        if grad.len() != self.values.len() {
            return Err(LabError::invalid(format!(
                "gradient length {} does not match vocabulary size {}",
                grad.len(),
                self.values.len()
            )));
        }
        check_finite(grad.as_slice(), "gradient")?;
        for (t, g) in self.values.iter_mut().zip(grad.as_slice()) {
            *t += lr * g;
        }
        Ok(())
    }

    /// Ascent step along a [`ScoreCombination`] without materialising the
    /// dense gradient. `dist` must be the distribution of `self`.
    ///
    /// Component `j` moves by `lr · (c_j − W·P(j))` where `c_j` is the total
    /// coefficient on token `j` and `W` the sum of all coefficients.
    pub fn apply_combination(
        &mut self,
        dist: &VocabDistribution,
        comb: &ScoreCombination,
        lr: f64,
    ) -> Result<()> {
        check_lr(lr)?;
        if dist.vocab_size() != self.values.len() {
            return Err(LabError::invalid("distribution does not match logits"));
        }
        let total = comb.total_weight();
        if !total.is_finite() {
            return Err(LabError::invalid("non-finite combination weight"));
        }
        if total != 0.0 {
            let step = lr * total;
            for (t, p) in self.values.iter_mut().zip(&dist.probs) {
                *t -= step * p;
            }
        }
        for &(tok, c) in comb.terms() {
            check_token(tok, self.values.len())?;
            self.values[tok.0] += lr * c;
        }
        Ok(())
    }
}

fn check_lr(lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(LabError::invalid(format!(
            "learning rate must be positive and finite, got {lr}"
        )))
    }
}

/// Numerically stable softmax of `logits` written into `out`.
pub(crate) fn softmax_into(logits: &[f64], out: &mut Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.clear();
    out.extend(logits.iter().map(|&t| (t - max).exp()));
    let z: f64 = out.iter().sum();
    let inv = 1.0 / z;
    for p in out.iter_mut() {
        *p *= inv;
    }
}

/// Softmax of a raw logit slice. Rejects non-finite entries.
pub fn softmax(logits: &[f64]) -> Result<VocabDistribution> {
    Ok(PolicyLogits::new(logits.to_vec())?.to_distribution())
}

/// A probability vector over the vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct VocabDistribution {
    probs: Vec<f64>,
}

impl VocabDistribution {
    /// Validates non-negativity and unit mass (within [`MASS_TOLERANCE`]).
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(LabError::invalid("distribution must be non-empty"));
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(LabError::invalid(format!(
                "probability {i} is invalid ({})",
                probs[i]
            )));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(LabError::invalid(format!(
                "probabilities sum to {mass}, not 1"
            )));
        }
        Ok(VocabDistribution { probs })
    }

    /// One-hot distribution at `token`.
    pub fn one_hot(vocab_size: usize, token: TokenId) -> Result<Self> {
        check_token(token, vocab_size)?;
        let mut probs = vec![0.0; vocab_size];
        probs[token.0] = 1.0;
        Ok(VocabDistribution { probs })
    }

    pub fn uniform(vocab_size: usize) -> Result<Self> {
        if vocab_size == 0 {
            return Err(LabError::invalid("vocabulary must be non-empty"));
        }
        Ok(VocabDistribution {
            probs: vec![1.0 / vocab_size as f64; vocab_size],
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, token: TokenId) -> Result<f64> {
        check_token(token, self.probs.len())?;
        Ok(self.probs[token.0])
    }

    pub fn check_token(&self, token: TokenId) -> Result<()> {
        check_token(token, self.probs.len())
    }

    /// Most probable token (lowest index among ties) and its probability.
    pub fn mode(&self) -> (TokenId, f64) {
        let (i, p) = self
            .probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bp), (i, &p)| {
                if p > bp {
                    (i, p)
                } else {
                    (bi, bp)
                }
            });
        (TokenId(i), p)
    }

    /// Tokens sorted by descending probability, ties by ascending index.
    pub fn ranked_tokens(&self) -> Vec<TokenId> {
        let mut idx: Vec<usize> = (0..self.probs.len()).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        idx.into_iter().map(TokenId).collect()
    }

    /// The `n` most probable tokens in rank order (ties by ascending index).
    pub fn top_tokens(&self, n: usize) -> Vec<TokenId> {
        let n = n.min(self.probs.len());
        let cmp = |a: &usize, b: &usize| self.probs[*b].total_cmp(&self.probs[*a]).then(a.cmp(b));
        let mut idx: Vec<usize> = (0..self.probs.len()).collect();
        if n < idx.len() && n > 0 {
            idx.select_nth_unstable_by(n - 1, cmp);
            idx.truncate(n);
        }
        idx.sort_by(cmp);
        idx.truncate(n);
        idx.into_iter().map(TokenId).collect()
    }

    /// 1-based rank of `token` by descending probability; ties go to the
    /// lower token index.
    pub fn rank_of(&self, token: TokenId) -> Result<usize> {
        check_token(token, self.probs.len())?;
        let pt = self.probs[token.0];
        let ahead = self
            .probs
            .iter()
            .enumerate()
            .filter(|&(j, &p)| p > pt || (p == pt && j < token.0))
            .count();
        Ok(ahead + 1)
    }

    /// `∇_θ log P(token)` for the softmax parameterisation: `e_token − P`.
    pub fn log_prob_gradient(&self, token: TokenId) -> Result<GradientVector> {
        check_token(token, self.probs.len())?;
        let mut values: Vec<f64> = self.probs.iter().map(|p| -p).collect();
        values[token.0] += 1.0;
        Ok(GradientVector { values })
    }

    pub fn sampler(&self) -> CategoricalSampler {
        CategoricalSampler::new(&self.probs)
    }

    /// `k` independent draws with replacement.
    pub fn sample(&self, k: usize, rng: &mut RngStream) -> Result<SampleBatch> {
        if k == 0 {
            return Err(LabError::invalid("sample size k must be at least 1"));
        }
        let sampler = self.sampler();
        Ok(SampleBatch {
            tokens: (0..k).map(|_| sampler.draw(rng)).collect(),
        })
    }
}

/// Inverse-CDF sampler over a fixed probability vector.
#[derive(Clone, Debug)]
pub struct CategoricalSampler {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl CategoricalSampler {
    fn new(probs: &[f64]) -> Self {
        let mut sampler = CategoricalSampler {
            cdf: Vec::with_capacity(probs.len()),
            last_positive: 0,
        };
        sampler.refill(probs);
        sampler
    }

    /// Rebuilds the sampler for new probabilities, reusing its buffer.
    pub(crate) fn refill(&mut self, probs: &[f64]) {
        let mut acc = 0.0;
        self.cdf.clear();
        self.cdf.extend(probs.iter().map(|p| {
            acc += p;
            acc
        }));
        self.last_positive = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    }

    /// One draw. Zero-probability tokens are never returned.
    pub fn draw(&self, rng: &mut RngStream) -> TokenId {
        let total = *self.cdf.last().expect("non-empty cdf");
        let u = rng.uniform() * total;
        let i = self.cdf.partition_point(|&c| c <= u);
        TokenId(i.min(self.last_positive))
    }
}

/// Tokens drawn from a policy, with replacement and in draw order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleBatch {
    tokens: Vec<TokenId>,
}

impl SampleBatch {
    pub fn new(tokens: Vec<TokenId>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(LabError::invalid("sample batch must be non-empty"));
        }
        Ok(SampleBatch { tokens })
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Distinct tokens in order of first occurrence.
    pub fn unique(&self) -> Vec<TokenId> {
        let mut seen = Vec::with_capacity(self.tokens.len());
        for &t in &self.tokens {
            if !seen.contains(&t) {
                seen.push(t);
            }
        }
        seen
    }
}

/// A dense vector in logit space.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector {
    values: Vec<f64>,
}

impl GradientVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "gradient")?;
        Ok(GradientVector { values })
    }

    pub fn zeros(len: usize) -> Self {
        GradientVector {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &GradientVector) -> f64 {
        assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &GradientVector, scale: f64) {
        assert_eq!(self.len(), other.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }
}

/// A linear combination `Σ c_i ∇log P(y_i)` of score vectors.
///
/// Both estimators produce gradients of this form, so they are represented by
/// their coefficients and only expanded to a dense vector on demand.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreCombination {
    terms: Vec<(TokenId, f64)>,
}

impl ScoreCombination {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, token: TokenId, coefficient: f64) {
        self.terms.push((token, coefficient));
    }

    pub fn terms(&self) -> &[(TokenId, f64)] {
        &self.terms
    }

    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|&(_, c)| c).sum()
    }

    /// Dense gradient `Σ c_i (e_{y_i} − P)`.
    pub fn materialize(&self, dist: &VocabDistribution) -> Result<GradientVector> {
        let total = self.total_weight();
        let mut values: Vec<f64> = dist.probs().iter().map(|p| -total * p).collect();
        for &(tok, c) in &self.terms {
            dist.check_token(tok)?;
            values[tok.0] += c;
        }
        GradientVector::new(values)
    }
}

/// Largest `|lr · W|` for which [`ascend_incremental`] takes its fast path.
const INCREMENTAL_SHIFT_LIMIT: f64 = 0.25;

/// `e^x` for `|x| ≤ INCREMENTAL_SHIFT_LIMIT`: degree-12 Taylor polynomial,
/// truncation error below 1e-17 relative.
#[inline(always)]
fn exp_small(x: f64) -> f64 {
    const C: [f64; 13] = [
        1.0,
        1.0,
        1.0 / 2.0,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5040.0,
        1.0 / 40320.0,
        1.0 / 362880.0,
        1.0 / 3628800.0,
        1.0 / 39916800.0,
        1.0 / 479001600.0,
    ];
    C.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Applies [`PolicyLogits::apply_combination`] and updates `dist` to match
/// without recomputing the softmax: each probability is rescaled by
/// `exp(−lr·W·P(j) + lr·c_j)` and the vector renormalised.
///
/// Falls back to an exact softmax when the shift is too large for the
/// polynomial. Rounding drifts slowly away from the exact softmax, so
/// callers refresh with [`PolicyLogits::distribution_into`] periodically.
pub(crate) fn ascend_incremental(
    logits: &mut PolicyLogits,
    dist: &mut VocabDistribution,
    comb: &ScoreCombination,
    lr: f64,
) -> Result<()> {
    logits.apply_combination(dist, comb, lr)?;
    let shift = lr * comb.total_weight();
    if shift.abs() > INCREMENTAL_SHIFT_LIMIT {
        logits.distribution_into(dist);
        return Ok(());
    }
    for p in dist.probs.iter_mut() {
        *p *= exp_small(-shift * *p);
    }
    for &(tok, c) in comb.terms() {
        dist.probs[tok.0] *= (lr * c).exp();
    }
    let z: f64 = dist.probs.iter().sum();
    if !(z.is_finite() && z > 0.0) {
        logits.distribution_into(dist);
        return Ok(());
    }
    let inv = 1.0 / z;
    for p in dist.probs.iter_mut() {
        *p *= inv;
    }
    Ok(())
}
