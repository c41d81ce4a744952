//! Initial policies: synthetic logits at a target entropy, or logits loaded
//! from JSON-lines files.

use std::path::Path;

use rand::Rng;
use rand_distr::{StandardNormal, StudentT};

use crate::error::{LabError, Result};
use crate::io;
use crate::lab::config::LogitFamily;
use crate::metrics::entropy;
use crate::policy::PolicyLogits;
use crate::rng::RngStream;

/// Realised entropy must land this close to the target.
pub const ENTROPY_TOLERANCE: f64 = 0.05;

// bisection stops once this close; well inside ENTROPY_TOLERANCE
const BISECTION_TOLERANCE: f64 = 1e-4;

fn entropy_at_scale(raw: &[f64], scale: f64) -> f64 {
    let max = raw.iter().fold(f64::NEG_INFINITY, |m, &z| m.max(scale * z));
    let (mut total, mut weighted) = (0.0, 0.0);
    for &z in raw {
        let shifted = scale * z - max;
        let w = shifted.exp();
        total += w;
        weighted += w * shifted;
    }
    // H = log Z - E[shifted]
    (total.ln() - weighted / total).max(0.0)
}

fn draw_raw(vocab_size: usize, family: LogitFamily, rng: &mut RngStream) -> Result<Vec<f64>> {
    Ok(match family {
        LogitFamily::Gaussian => (0..vocab_size).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        LogitFamily::StudentT { dof } => {
            let dist = StudentT::new(dof).map_err(|e| LabError::invalid(format!("student-t: {e}")))?;
            (0..vocab_size).map(|_| rng.sample(dist)).collect()
        }
    })
}

/// Draws i.i.d. raw logits from `family` and rescales them by the factor
/// (found by bisection) that puts the softmax entropy within
/// [`ENTROPY_TOLERANCE`] nats of `target_entropy`. Token order is random.
pub fn synth_init(
    vocab_size: usize,
    target_entropy: f64,
    family: LogitFamily,
    rng: &mut RngStream,
) -> Result<PolicyLogits> {
    if vocab_size == 0 {
        return Err(LabError::invalid("vocab_size must be positive"));
    }
    let max_entropy = (vocab_size as f64).ln();
    if !(target_entropy > 0.0 && target_entropy <= max_entropy + 1e-12) {
        return Err(LabError::invalid(format!(
            "target entropy {target_entropy} unreachable: must lie in (0, {max_entropy}]"
        )));
    }
    let raw = draw_raw(vocab_size, family, rng)?;
    if raw.iter().any(|z| !z.is_finite()) {
        return Err(LabError::Internal("non-finite raw logit draw".into()));
    }
    // entropy falls monotonically in the scale, from ln|V| at zero
    if max_entropy - target_entropy <= BISECTION_TOLERANCE {
        return PolicyLogits::zeros(vocab_size);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while entropy_at_scale(&raw, hi) > target_entropy {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(LabError::invalid(format!(
                "target entropy {target_entropy} unreachable for this draw"
            )));
        }
    }
    let mut scale = 0.5 * (lo + hi);
    for _ in 0..200 {
        scale = 0.5 * (lo + hi);
        let h = entropy_at_scale(&raw, scale);
        if (h - target_entropy).abs() <= BISECTION_TOLERANCE {
            break;
        }
        if h > target_entropy {
            lo = scale;
        } else {
            hi = scale;
        }
    }
    let logits = PolicyLogits::new(raw.iter().map(|z| scale * z).collect())?;
    let h = entropy(&logits.to_distribution());
    if (h - target_entropy).abs() > ENTROPY_TOLERANCE {
        return Err(LabError::invalid(format!(
            "could not reach entropy {target_entropy} (got {h})"
        )));
    }
    Ok(logits)
}

/// Record `index` of a JSON-lines logits file.
pub fn load_logits(path: &Path, index: usize) -> Result<PolicyLogits> {
    let row = io::read_row(path, index, None)?;
    PolicyLogits::new(row)
}

pub fn write_logits(path: &Path, logits: &[PolicyLogits]) -> Result<()> {
    let text = io::rows_to_jsonl(logits.iter().map(|l| l.as_slice()))?;
    io::write_atomic(path, text.as_bytes())
}

pub fn read_all_logits(path: &Path) -> Result<Vec<PolicyLogits>> {
    io::read_rows(path)?.into_iter().map(PolicyLogits::new).collect()
}
