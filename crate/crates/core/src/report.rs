//! CSV renderings of analytics results.

use crate::counterexample::CeGridRow;
use crate::error::{LabError, Result};
use crate::metrics::{mode_cdf, rank_cdf, rank_diff_histogram};
use crate::policy::{TokenId, VocabDistribution};

fn csv_error(e: impl std::fmt::Display) -> LabError {
    LabError::Internal(format!("csv: {e}"))
}

/// Serialises a header and records to CSV bytes.
pub(crate) fn csv_bytes<I, R, S>(header: &[&str], records: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for r in records {
        w.write_record(r).map_err(csv_error)?;
    }
    w.into_inner().map_err(csv_error)
}

/// `x,before,after`: both mode CDFs on `points` evenly spaced `x ∈ [0, 1]`.
pub fn mode_cdf_csv(before: &[VocabDistribution], after: &[VocabDistribution], points: usize) -> Result<Vec<u8>> {
    let b = mode_cdf(before)?.on_grid(points);
    let a = mode_cdf(after)?.on_grid(points);
    csv_bytes(
        &["x", "before", "after"],
        b.iter()
            .zip(&a)
            .map(|(&(x, fb), &(_, fa))| [x.to_string(), fb.to_string(), fa.to_string()]),
    )
}

/// `rank,before_pct,after_pct`: cumulative percentage of targets at rank
/// `≤ rank`, for ranks `1..=max_rank`.
pub fn rank_cdf_csv(
    before: &[VocabDistribution],
    after: &[VocabDistribution],
    targets: &[TokenId],
    max_rank: usize,
    include_rank1: bool,
) -> Result<Vec<u8>> {
    let b = rank_cdf(before, targets, max_rank, include_rank1)?;
    let a = rank_cdf(after, targets, max_rank, include_rank1)?;
    csv_bytes(
        &["rank", "before_pct", "after_pct"],
        b.cumulative_pct
            .iter()
            .zip(&a.cumulative_pct)
            .enumerate()
            .map(|(i, (pb, pa))| [(i + 1).to_string(), pb.to_string(), pa.to_string()]),
    )
}

/// `rank,diff`: change in the fraction of targets at each rank; the last row
/// has rank `>max_rank` and collects everything below.
pub fn rank_diff_csv(
    before: &[VocabDistribution],
    after: &[VocabDistribution],
    targets: &[TokenId],
    max_rank: usize,
) -> Result<Vec<u8>> {
    let h = rank_diff_histogram(before, after, targets, max_rank)?;
    csv_bytes(
        &["rank", "diff"],
        h.diffs.iter().enumerate().map(|(i, d)| {
            let rank = if i < max_rank {
                (i + 1).to_string()
            } else {
                format!(">{max_rank}")
            };
            [rank, d.to_string()]
        }),
    )
}

/// `theta,R,E_grad_Rtilde,E_Rtilde`.
pub fn ce_grid_csv(rows: &[CeGridRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &["theta", "R", "E_grad_Rtilde", "E_Rtilde"],
        rows.iter().map(|r| {
            [
                r.theta.to_string(),
                r.expected_reward.to_string(),
                r.expected_grad_rtilde.to_string(),
                r.expected_rtilde.to_string(),
            ]
        }),
    )
}
