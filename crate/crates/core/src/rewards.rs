//! Token-level reward functions.

use std::path::Path;

use crate::error::{LabError, Result};
use crate::io;
use crate::policy::{TokenId, VocabDistribution};

/// Size of the medium-reward set in the simulated setting.
pub const TOP_SET_SIZE: usize = 10;

/// Reward levels of the simulated setting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulatedLevels {
    pub best: f64,
    pub medium: f64,
    pub other: f64,
}

impl Default for SimulatedLevels {
    fn default() -> Self {
        SimulatedLevels {
            best: 2.0,
            medium: 1.0,
            other: 0.0,
        }
    }
}

/// A deterministic reward over tokens.
#[derive(Clone, Debug, PartialEq)]
pub enum RewardSpec {
    /// The same reward for every token.
    Constant { value: f64 },
    /// One target token, a frozen set of initially most probable tokens,
    /// and everyone else.
    Simulated {
        vocab_size: usize,
        y_best: TokenId,
        /// The initial top tokens, in initial rank order. Contains `y_best`.
        top_set: Vec<TokenId>,
        levels: SimulatedLevels,
    },
    /// An explicit reward per token.
    Table { values: Vec<f64> },
}

impl RewardSpec {
    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(LabError::invalid("constant reward must be finite"));
        }
        Ok(RewardSpec::Constant { value })
    }

    pub fn table(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::invalid("reward table must be non-empty and finite"));
        }
        Ok(RewardSpec::Table { values })
    }

    /// Simulated reward whose target is the token at `target_rank` (1-based,
    /// at least 2) of `initial`. The top set is the initial top ten and is
    /// never recomputed. The target earns `levels.best` even though it is a
    /// member of the top set.
    pub fn build_simulated(initial: &VocabDistribution, target_rank: usize) -> Result<Self> {
        Self::build_simulated_with(initial, target_rank, SimulatedLevels::default())
    }

    pub fn build_simulated_with(
        initial: &VocabDistribution,
        target_rank: usize,
        levels: SimulatedLevels,
    ) -> Result<Self> {
        let n = initial.vocab_size();
        if n < TOP_SET_SIZE {
            return Err(LabError::invalid(format!(
                "simulated reward needs at least {TOP_SET_SIZE} tokens, vocabulary has {n}"
            )));
        }
        if target_rank < 2 || target_rank > n {
            return Err(LabError::invalid(format!(
                "target rank must lie in [2, {n}], got {target_rank}"
            )));
        }
        let ranked = initial.top_tokens(target_rank.max(TOP_SET_SIZE));
        Ok(RewardSpec::Simulated {
            vocab_size: n,
            y_best: ranked[target_rank - 1],
            top_set: ranked[..TOP_SET_SIZE].to_vec(),
            levels,
        })
    }

    /// Table reward from row `index` of a JSON-lines file.
    pub fn load_table(path: &Path, index: usize, vocab_size: Option<usize>) -> Result<Self> {
        Self::table(io::read_row(path, index, vocab_size)?)
    }

    /// Vocabulary size the reward is tied to, if any.
    pub fn vocab_size(&self) -> Option<usize> {
        match self {
            RewardSpec::Constant { .. } => None,
            RewardSpec::Simulated { vocab_size, .. } => Some(*vocab_size),
            RewardSpec::Table { values } => Some(values.len()),
        }
    }

    /// The target token, for the variants that have one.
    pub fn y_best(&self) -> Option<TokenId> {
        match self {
            RewardSpec::Simulated { y_best, .. } => Some(*y_best),
            _ => None,
        }
    }

    pub fn evaluate(&self, token: TokenId) -> Result<f64> {
        if let Some(n) = self.vocab_size() {
            if token.0 >= n {
                return Err(LabError::TokenOutOfRange {
                    token: token.0,
                    vocab_size: n,
                });
            }
        }
        Ok(self.value_at(token))
    }

    /// Reward of an in-range token.
    pub(crate) fn value_at(&self, token: TokenId) -> f64 {
        match self {
            RewardSpec::Constant { value } => *value,
            RewardSpec::Simulated {
                y_best,
                top_set,
                levels,
                ..
            } => {
                if token == *y_best {
                    levels.best
                } else if top_set.contains(&token) {
                    levels.medium
                } else {
                    levels.other
                }
            }
            RewardSpec::Table { values } => values[token.0],
        }
    }

    /// Checks that the reward can be evaluated on every token of `dist`.
    pub fn check_compatible(&self, vocab_size: usize) -> Result<()> {
        match self.vocab_size() {
            Some(n) if n != vocab_size => Err(LabError::invalid(format!(
                "reward is defined over {n} tokens, policy has {vocab_size}"
            ))),
            _ => Ok(()),
        }
    }

    /// Rewards for every token, `0..vocab_size`.
    pub fn dense(&self, vocab_size: usize) -> Result<Vec<f64>> {
        self.check_compatible(vocab_size)?;
        Ok((0..vocab_size).map(|j| self.value_at(TokenId(j))).collect())
    }
}
