//! Peakiness and rank analytics over distributions and snapshot sets.

use crate::error::{LabError, Result};
use crate::policy::{TokenId, VocabDistribution};

/// How concentrated a distribution is.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakinessReport {
    pub mode_prob: f64,
    pub top_k_mass: f64,
    /// Shannon entropy in nats.
    pub entropy_nats: f64,
}

/// Shannon entropy in nats, with `0 · ln 0 = 0`.
pub fn entropy(dist: &VocabDistribution) -> f64 {
    let h: f64 = dist
        .probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h.max(0.0)
}

/// Total probability of the `k` most probable tokens.
pub fn top_k_mass(dist: &VocabDistribution, k: usize) -> Result<f64> {
    let n = dist.vocab_size();
    if k == 0 || k > n {
        return Err(LabError::invalid(format!("top_k must lie in [1, {n}], got {k}")));
    }
    if k == n {
        return Ok(dist.probs().iter().sum::<f64>().min(1.0));
    }
    let mut p = dist.probs().to_vec();
    p.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    // sum largest-first so the result is independent of selection order
    let mut head = p[..k].to_vec();
    head.sort_by(|a, b| b.total_cmp(a));
    Ok(head.iter().sum::<f64>().min(1.0))
}

pub fn peakiness(dist: &VocabDistribution, top_k: usize) -> Result<PeakinessReport> {
    let top_k_mass = top_k_mass(dist, top_k)?;
    let (_, mode_prob) = dist.mode();
    Ok(PeakinessReport {
        mode_prob: mode_prob.min(top_k_mass),
        top_k_mass,
        entropy_nats: entropy(dist),
    })
}

/// Empirical CDF of mode probabilities over a set of distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeCdf {
    sorted_modes: Vec<f64>,
}

impl ModeCdf {
    pub fn from_modes(mut modes: Vec<f64>) -> Result<Self> {
        if modes.is_empty() {
            return Err(LabError::invalid("mode CDF needs at least one distribution"));
        }
        modes.sort_by(f64::total_cmp);
        Ok(ModeCdf { sorted_modes: modes })
    }

    /// Fraction of distributions whose mode probability is `≤ x`.
    pub fn at(&self, x: f64) -> f64 {
        let n = self.sorted_modes.partition_point(|&m| m <= x);
        n as f64 / self.sorted_modes.len() as f64
    }

    /// The curve sampled at `points` evenly spaced `x ∈ [0, 1]`.
    pub fn on_grid(&self, points: usize) -> Vec<(f64, f64)> {
        let points = points.max(2);
        (0..points)
            .map(|i| {
                let x = i as f64 / (points - 1) as f64;
                (x, self.at(x))
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.sorted_modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_modes.is_empty()
    }
}

pub fn mode_cdf(snapshots: &[VocabDistribution]) -> Result<ModeCdf> {
    ModeCdf::from_modes(snapshots.iter().map(|d| d.mode().1).collect())
}

fn check_aligned(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(LabError::invalid(format!(
            "{what}: {a} distributions but {b} targets"
        )));
    }
    if a == 0 {
        return Err(LabError::invalid(format!("{what}: empty collection")));
    }
    Ok(())
}

fn ranks(dists: &[VocabDistribution], targets: &[TokenId]) -> Result<Vec<usize>> {
    dists
        .iter()
        .zip(targets)
        .map(|(d, &t)| d.rank_of(t))
        .collect()
}

/// Cumulative percentage of contexts whose target sits at rank `≤ x`, for
/// `x = 1..=max_rank`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankCdf {
    /// `cumulative_pct[i]` is the percentage at rank `i + 1`.
    pub cumulative_pct: Vec<f64>,
    /// Number of contexts the percentages are taken over.
    pub population: usize,
}

/// With `include_rank1 = false`, contexts whose target is already ranked
/// first are left out of the population, so the curve is 0 at rank 1.
pub fn rank_cdf(
    dists: &[VocabDistribution],
    targets: &[TokenId],
    max_rank: usize,
    include_rank1: bool,
) -> Result<RankCdf> {
    check_aligned(dists.len(), targets.len(), "rank CDF")?;
    if max_rank == 0 {
        return Err(LabError::invalid("max_rank must be at least 1"));
    }
    let ranks: Vec<usize> = ranks(dists, targets)?
        .into_iter()
        .filter(|&r| include_rank1 || r > 1)
        .collect();
    if ranks.is_empty() {
        return Err(LabError::Degenerate(
            "every target is ranked first; nothing left to tabulate".into(),
        ));
    }
    let mut counts = vec![0usize; max_rank];
    for &r in &ranks {
        if r <= max_rank {
            counts[r - 1] += 1;
        }
    }
    let mut acc = 0;
    let cumulative_pct = counts
        .iter()
        .map(|c| {
            acc += c;
            100.0 * acc as f64 / ranks.len() as f64
        })
        .collect();
    Ok(RankCdf {
        cumulative_pct,
        population: ranks.len(),
    })
}

/// Counts of target ranks `1..=max_rank` plus an overflow bucket.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankHistogram {
    /// `counts[i]` for rank `i + 1`; the last entry counts ranks
    /// `> max_rank`.
    pub counts: Vec<usize>,
    pub total: usize,
}

impl RankHistogram {
    pub fn max_rank(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.total as f64)
            .collect()
    }
}

pub fn rank_histogram(
    dists: &[VocabDistribution],
    targets: &[TokenId],
    max_rank: usize,
) -> Result<RankHistogram> {
    check_aligned(dists.len(), targets.len(), "rank histogram")?;
    if max_rank == 0 {
        return Err(LabError::invalid("max_rank must be at least 1"));
    }
    let mut counts = vec![0usize; max_rank + 1];
    for r in ranks(dists, targets)? {
        counts[(r - 1).min(max_rank)] += 1;
    }
    Ok(RankHistogram {
        counts,
        total: dists.len(),
    })
}

/// Per-rank change in occupancy between two snapshot sets.
#[derive(Clone, Debug, PartialEq)]
pub struct RankDiffHistogram {
    /// `after − before` occupancy fraction for ranks `1..=max_rank`, then
    /// the overflow bucket.
    pub diffs: Vec<f64>,
}

impl RankDiffHistogram {
    pub fn total(&self) -> f64 {
        self.diffs.iter().sum()
    }
}

pub fn rank_diff_histogram(
    before: &[VocabDistribution],
    after: &[VocabDistribution],
    targets: &[TokenId],
    max_rank: usize,
) -> Result<RankDiffHistogram> {
    if before.len() != after.len() {
        return Err(LabError::invalid(format!(
            "rank diff: {} snapshots before but {} after",
            before.len(),
            after.len()
        )));
    }
    let b = rank_histogram(before, targets, max_rank)?;
    let a = rank_histogram(after, targets, max_rank)?;
    let diffs = a
        .counts
        .iter()
        .zip(&b.counts)
        .map(|(&x, &y)| (x as f64 - y as f64) / b.total as f64)
        .collect();
    Ok(RankDiffHistogram { diffs })
}
