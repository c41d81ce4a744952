//! Declarative experiment description.
//!
//! Configs are TOML files whose keys mirror [`ExperimentConfig`]. Values are
//! resolved in three layers: built-in defaults, then the config file, then
//! `key=value` overrides (dotted keys address nested tables, e.g.
//! `estimator.k=20`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::estimators::{Baseline, CmrtParams};

/// Distribution of the raw logit draws before scaling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum LogitFamily {
    Gaussian,
    /// Student-t with `dof` degrees of freedom: a heavy upper tail gives a
    /// few dominant tokens over a diffuse remainder.
    StudentT { dof: f64 },
}

impl Default for LogitFamily {
    fn default() -> Self {
        LogitFamily::Gaussian
    }
}

/// Where each repetition's initial logits come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    /// Random logits scaled to a target entropy. `seed` defaults to the
    /// experiment's master seed.
    Synthetic {
        target_entropy: f64,
        #[serde(default)]
        family: LogitFamily,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Logits read from a JSON-lines file. Repetition `r` uses record
    /// `(index + r) mod records`.
    File {
        path: PathBuf,
        #[serde(default)]
        index: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Reinforce {
        #[serde(default = "one")]
        k: usize,
        #[serde(default)]
        baseline: f64,
    },
    Cmrt {
        #[serde(default = "twenty")]
        k: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "yes")]
        dedup: bool,
    },
}

fn one() -> usize {
    1
}
fn twenty() -> usize {
    20
}
fn default_alpha() -> f64 {
    0.005
}
fn yes() -> bool {
    true
}

impl EstimatorSpec {
    pub fn k(&self) -> usize {
        match self {
            EstimatorSpec::Reinforce { k, .. } | EstimatorSpec::Cmrt { k, .. } => *k,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.k() == 0 {
            return Err(LabError::Config("estimator.k must be at least 1".into()));
        }
        match self {
            EstimatorSpec::Reinforce { baseline, .. } => {
                Baseline::new(*baseline).map_err(|e| LabError::Config(e.to_string()))?;
            }
            EstimatorSpec::Cmrt { alpha, dedup, .. } => {
                CmrtParams::new(*alpha, *dedup).map_err(|e| LabError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }
}

/// Which reward to train against. `target_rank` on the constant and table
/// variants only selects the token reported as `p_best` / `rank_best`
/// (default: the initial mode).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardSource {
    Constant {
        #[serde(default = "unit")]
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_rank: Option<usize>,
    },
    Simulated {
        target_rank: usize,
    },
    Table {
        path: PathBuf,
        #[serde(default)]
        index: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_rank: Option<usize>,
    },
}

fn unit() -> f64 {
    1.0
}

impl RewardSource {
    pub fn target_rank(&self) -> usize {
        match self {
            RewardSource::Simulated { target_rank } => *target_rank,
            RewardSource::Constant { target_rank, .. } | RewardSource::Table { target_rank, .. } => {
                target_rank.unwrap_or(1)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub vocab_size: usize,
    pub init: InitSpec,
    pub estimator: EstimatorSpec,
    pub reward: RewardSource,
    pub lr: f64,
    pub steps: usize,
    pub repetitions: usize,
    pub record_every: usize,
    pub metric_top_k: usize,
    pub tracked_ranks: usize,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            vocab_size: 30715,
            init: InitSpec::Synthetic {
                target_entropy: 2.9,
                family: LogitFamily::Gaussian,
                seed: None,
            },
            estimator: EstimatorSpec::Reinforce { k: 1, baseline: 0.0 },
            reward: RewardSource::Simulated { target_rank: 2 },
            lr: 0.1,
            steps: 50_000,
            repetitions: 100,
            record_every: 100,
            metric_top_k: 10,
            tracked_ranks: 10,
            master_seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML document on top of the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::resolve(Some(text), &[])
    }

    /// Defaults, then `file_text` (if any), then `overrides` in order.
    pub fn resolve(file_text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = match file_text {
            Some(t) => t
                .parse()
                .map_err(|e: toml::de::Error| LabError::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::resolve(Some(&text), overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Internal(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LabError::Config(m.to_string()));
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1");
        }
        if self.metric_top_k == 0 || self.metric_top_k > self.vocab_size {
            return bad("metric_top_k must lie in [1, vocab_size]");
        }
        if self.tracked_ranks > self.vocab_size {
            return bad("tracked_ranks cannot exceed vocab_size");
        }
        self.estimator.validate()?;
        let rank = self.reward.target_rank();
        if rank == 0 || rank > self.vocab_size {
            return bad("reward.target_rank must lie in [1, vocab_size]");
        }
        if let RewardSource::Simulated { target_rank } = self.reward {
            if target_rank < 2 {
                return bad("simulated reward.target_rank must be at least 2");
            }
        }
        if let InitSpec::Synthetic { target_entropy, family, .. } = self.init {
            let max = (self.vocab_size as f64).ln();
            if !(target_entropy > 0.0 && target_entropy <= max) {
                return Err(LabError::Config(format!(
                    "init.target_entropy must lie in (0, ln vocab_size = {max:.4}]"
                )));
            }
            if let LogitFamily::StudentT { dof } = family {
                if !(dof > 0.0 && dof.is_finite()) {
                    return bad("init.family.dof must be positive");
                }
            }
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `dotted.key=value` override. Values are read as TOML
/// scalars, falling back to bare strings.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| LabError::Config(format!("override `{spec}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(LabError::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| LabError::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::resolve(None, &[]).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.vocab_size, 30715);
    }

    #[test]
    fn file_then_overrides() {
        let text = r#"
            steps = 10
            lr = 0.5
            [estimator]
            kind = "cmrt"
            k = 4
            [reward]
            kind = "constant"
            value = 1.0
        "#;
        let c = ExperimentConfig::resolve(Some(text), &["lr=0.25".into(), "estimator.alpha=0.1".into()]).unwrap();
        assert_eq!(c.steps, 10);
        assert_eq!(c.lr, 0.25);
        assert_eq!(
            c.estimator,
            EstimatorSpec::Cmrt { k: 4, alpha: 0.1, dedup: true }
        );
        assert_eq!(c.reward, RewardSource::Constant { value: 1.0, target_rank: None });
        assert_eq!(c.repetitions, 100);
    }

    #[test]
    fn nested_override_creates_tables() {
        let c = ExperimentConfig::resolve(
            None,
            &[
                "init.kind=synthetic".into(),
                "init.target_entropy=3.5".into(),
                "init.family.name=student_t".into(),
                "init.family.dof=3".into(),
            ],
        )
        .unwrap();
        match c.init {
            InitSpec::Synthetic { target_entropy, family, .. } => {
                assert_eq!(target_entropy, 3.5);
                assert_eq!(family, LogitFamily::StudentT { dof: 3.0 });
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        for bad in [
            "steps = 0",
            "lr = -1.0",
            "repetitions = 0",
            "unknown_key = 3",
            "[estimator]\nkind = \"reinforce\"\nk = 0",
            "[reward]\nkind = \"simulated\"\ntarget_rank = 1",
            "[init]\nkind = \"synthetic\"\ntarget_entropy = 20.0",
            "this is not toml",
        ] {
            assert!(matches!(ExperimentConfig::from_toml_str(bad), Err(LabError::Config(_))), "{bad}");
        }
        assert!(ExperimentConfig::resolve(None, &["nokey".into()]).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::default();
        c.estimator = EstimatorSpec::Cmrt { k: 20, alpha: 0.005, dedup: false };
        c.init = InitSpec::File { path: "x.jsonl".into(), index: 3 };
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }
}
