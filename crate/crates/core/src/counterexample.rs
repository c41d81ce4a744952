//! A three-outcome policy family on which contrastive MRT converges to the
//! wrong parameter.
//!
//! Outcomes `a, b, c` have probabilities `θ, 2θ², 1 − θ − 2θ²` for
//! `θ ∈ [0, 0.5]` and rewards `1, 0, 0.5`. The expected reward
//! `R(θ) = θ + 0.5(1 − θ − 2θ²)` peaks at `θ* = 0.25`, while the expected
//! CMRT gradient over batches of two (α = 1, deduplicated) changes sign at
//! `γ ≈ 0.295`, and `E[R̃]` peaks near 0.32.

use crate::error::{LabError, Result};
use crate::estimators::{cmrt_objective, CmrtParams};
use crate::optim::{bisect, golden_section_max};
use crate::policy::{SampleBatch, TokenId, VocabDistribution};
use crate::rewards::RewardSpec;

/// Rewards of `a`, `b`, `c`.
pub const REWARDS: [f64; 3] = [1.0, 0.0, 0.5];

/// Maximiser of `R(θ)`.
pub const THETA_STAR: f64 = 0.25;

/// Parameter of the family, validated to lie in `[0, 0.5]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct CeTheta(f64);

impl CeTheta {
    pub fn new(theta: f64) -> Result<Self> {
        if (0.0..=0.5).contains(&theta) {
            Ok(CeTheta(theta))
        } else {
            Err(LabError::invalid(format!("theta must lie in [0, 0.5], got {theta}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    A,
    B,
    C,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::A, Outcome::B, Outcome::C];

    pub fn index(self) -> usize {
        match self {
            Outcome::A => 0,
            Outcome::B => 1,
            Outcome::C => 2,
        }
    }
}

/// Unordered batch of two draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CeSample {
    AB,
    AC,
    BC,
    AA,
    BB,
    CC,
}

impl CeSample {
    pub const ALL: [CeSample; 6] = [
        CeSample::AB,
        CeSample::AC,
        CeSample::BC,
        CeSample::AA,
        CeSample::BB,
        CeSample::CC,
    ];

    pub fn outcomes(self) -> (Outcome, Outcome) {
        use Outcome::*;
        match self {
            CeSample::AB => (A, B),
            CeSample::AC => (A, C),
            CeSample::BC => (B, C),
            CeSample::AA => (A, A),
            CeSample::BB => (B, B),
            CeSample::CC => (C, C),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CeSample::AB => "{a,b}",
            CeSample::AC => "{a,c}",
            CeSample::BC => "{b,c}",
            CeSample::AA => "a,a",
            CeSample::BB => "b,b",
            CeSample::CC => "c,c",
        }
    }
}

/// One row of the sample table: a batch, its probability, `R̃` and `dR̃/dθ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CeSampleRow {
    pub sample: CeSample,
    pub prob: f64,
    pub rtilde: f64,
    pub grad_rtilde: f64,
}

fn probs_raw(t: f64) -> (f64, f64, f64) {
    let a = t;
    let b = 2.0 * t * t;
    (a, b, 1.0 - a - b)
}

/// `(P(a), P(b), P(c))`.
pub fn ce_probs(t: CeTheta) -> (f64, f64, f64) {
    probs_raw(t.0)
}

/// `R(θ) = θ + 0.5(1 − θ − 2θ²)`.
pub fn ce_expected_reward(t: CeTheta) -> f64 {
    let t = t.0;
    t + 0.5 * (1.0 - t - 2.0 * t * t)
}

/// `dR/dθ = 0.5 − 2θ`.
pub fn ce_expected_reward_derivative(t: CeTheta) -> f64 {
    0.5 - 2.0 * t.0
}

fn rows_raw(t: f64) -> [CeSampleRow; 6] {
    let (pa, pb, pc) = probs_raw(t);
    let one_m = 1.0 - 2.0 * t * t;
    let row = |sample, prob, rtilde, grad_rtilde| CeSampleRow {
        sample,
        prob,
        rtilde,
        grad_rtilde,
    };
    [
        row(
            CeSample::AB,
            4.0 * t * t * t,
            1.0 / (1.0 + 2.0 * t),
            -2.0 / (1.0 + 2.0 * t).powi(2),
        ),
        row(
            CeSample::AC,
            2.0 * t * pc,
            0.5 + t / (2.0 - 4.0 * t * t),
            (2.0 * t * t + 1.0) / (2.0 * one_m * one_m),
        ),
        row(
            CeSample::BC,
            4.0 * t * t * pc,
            pc / (2.0 - 2.0 * t),
            (t * t - 2.0 * t) / (1.0 - t).powi(2),
        ),
        row(CeSample::AA, pa * pa, 1.0, 0.0),
        row(CeSample::BB, pb * pb, 0.0, 0.0),
        row(CeSample::CC, pc * pc, 0.5, 0.0),
    ]
}

/// Closed-form sample table. The endpoints `θ ∈ {0, 0.5}` give some batches
/// probability zero and are rejected as degenerate.
pub fn ce_sample_table(t: CeTheta) -> Result<Vec<CeSampleRow>> {
    if t.0 <= 0.0 || t.0 >= 0.5 {
        return Err(LabError::Degenerate(format!(
            "theta = {} leaves some batches with probability zero",
            t.0
        )));
    }
    Ok(rows_raw(t.0).to_vec())
}

/// `E_S[∇R̃]` over batches of two, on `(0, 0.5]`.
pub fn ce_expected_cmrt_grad(t: CeTheta) -> Result<f64> {
    if t.0 <= 0.0 {
        return Err(LabError::invalid("expected CMRT gradient is defined on (0, 0.5]"));
    }
    Ok(expected_grad_raw(t.0))
}

fn expected_grad_raw(t: f64) -> f64 {
    rows_raw(t).iter().map(|r| r.prob * r.grad_rtilde).sum()
}

/// `E_S[R̃]`; at `θ = 0` every batch is `c,c` and `R̃ ≡ 0.5`.
pub fn ce_expected_rtilde(t: CeTheta) -> f64 {
    if t.0 == 0.0 {
        return 0.5;
    }
    rows_raw(t.0).iter().map(|r| r.prob * r.rtilde).sum()
}

/// The fixed point `γ` of expected CMRT dynamics: the sign change of
/// [`ce_expected_cmrt_grad`] on `(0.01, 0.5)`.
pub fn ce_find_gamma() -> Result<f64> {
    bisect(expected_grad_raw, 0.01, 0.5, 1e-10)
}

/// Maximiser of `E[R̃]` on `[0, 0.5]`.
pub fn ce_find_rtilde_argmax() -> Result<f64> {
    golden_section_max(|t| ce_expected_rtilde(CeTheta(t)), 0.0, 0.5, 1e-6)
}

/// `R̃` of a batch recomputed by the general CMRT machinery (α = 1, dedup)
/// on the three-token policy, independently of the closed forms.
pub fn rtilde_via_estimators(t: CeTheta, sample: CeSample) -> Result<f64> {
    let (pa, pb, pc) = ce_probs(t);
    // clamp rounding noise at the boundary; exact zeros stay exact
    let dist = VocabDistribution::from_probs(vec![pa, pb, pc.max(0.0)])?;
    let reward = RewardSpec::table(REWARDS.to_vec())?;
    let (x, y) = sample.outcomes();
    let batch = SampleBatch::new(vec![TokenId(x.index()), TokenId(y.index())])?;
    cmrt_objective(&dist, &batch, &reward, CmrtParams::new(1.0, true)?)
}

/// One row of the θ grid export.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CeGridRow {
    pub theta: f64,
    pub expected_reward: f64,
    pub expected_grad_rtilde: f64,
    pub expected_rtilde: f64,
}

/// `points` evenly spaced θ values covering `[0, 0.5]`.
pub fn ce_grid(points: usize) -> Result<Vec<CeGridRow>> {
    if points < 2 {
        return Err(LabError::invalid("grid needs at least two points"));
    }
    (0..points)
        .map(|i| {
            let theta = 0.5 * i as f64 / (points - 1) as f64;
            let t = CeTheta::new(theta)?;
            Ok(CeGridRow {
                theta,
                expected_reward: ce_expected_reward(t),
                // no updates happen at θ = 0
                expected_grad_rtilde: if theta == 0.0 { 0.0 } else { expected_grad_raw(theta) },
                expected_rtilde: ce_expected_rtilde(t),
            })
        })
        .collect()
}

/// Summary printed by the `counterexample` command.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CeSummary {
    pub theta_star: f64,
    pub gamma: f64,
    pub rtilde_argmax: f64,
    pub reward_slope_at_gamma: f64,
}

pub fn ce_summary() -> Result<CeSummary> {
    let theta_star = golden_section_max(|t| ce_expected_reward(CeTheta(t)), 0.0, 0.5, 1e-9)?;
    let gamma = ce_find_gamma()?;
    let rtilde_argmax = ce_find_rtilde_argmax()?;
    Ok(CeSummary {
        theta_star,
        gamma,
        rtilde_argmax,
        reward_slope_at_gamma: ce_expected_reward_derivative(CeTheta::new(gamma)?),
    })
}
