//! Seeded training loops and their persisted outputs.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::estimators::{cmrt_combination, reinforce_combination, Baseline, CmrtParams};
use crate::io;
use crate::lab::config::{EstimatorSpec, ExperimentConfig, InitSpec, RewardSource};
use crate::lab::init::{load_logits, synth_init, write_logits};
use crate::metrics::peakiness;
use crate::report::csv_bytes;
use crate::policy::{ascend_incremental, PolicyLogits, SampleBatch, TokenId, VocabDistribution};
use crate::rewards::RewardSpec;
use crate::rng::{RngStream, INIT_STREAM, TRAIN_STREAM};

/// Logits beyond this magnitude abort the repetition.
pub const OVERFLOW_LIMIT: f64 = 1e300;

/// Updates between exact softmax recomputations; distributions are also
/// recomputed exactly before every recorded row.
pub const REFRESH_INTERVAL: usize = 64;

/// Metrics of one policy at one step of one repetition.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub repetition: usize,
    pub step: usize,
    pub mode_prob: f64,
    /// Mass of the `metric_top_k` most probable tokens.
    pub top10_mass: f64,
    pub entropy_nats: f64,
    pub p_best: f64,
    pub rank_best: usize,
    pub tracked_probs: Vec<f64>,
}

/// Reward class of a tracked token.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenClass {
    Best,
    Top,
    Other,
}

impl TokenClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenClass::Best => "best",
            TokenClass::Top => "top",
            TokenClass::Other => "other",
        }
    }
}

/// A token whose probability is logged in the `tracked_*` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackedToken {
    pub column: usize,
    pub token: TokenId,
    pub initial_rank: usize,
    pub reward: f64,
    pub class: TokenClass,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub rows: Vec<MetricRow>,
    pub initial: PolicyLogits,
    pub final_logits: PolicyLogits,
    /// The token reported as `p_best` / `rank_best`.
    pub target: TokenId,
    pub tracked: Vec<TrackedToken>,
    /// Set when the repetition stopped early on numeric overflow.
    pub aborted: Option<String>,
}

impl RepetitionResult {
    pub fn first_row(&self) -> &MetricRow {
        self.rows.first().expect("step 0 is always recorded")
    }

    pub fn last_row(&self) -> &MetricRow {
        self.rows.last().expect("step 0 is always recorded")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub repetitions: Vec<RepetitionResult>,
}

/// Initial logits of repetition `repetition`.
pub fn initial_logits(config: &ExperimentConfig, repetition: usize) -> Result<PolicyLogits> {
    let logits = match &config.init {
        InitSpec::Synthetic {
            target_entropy,
            family,
            seed,
        } => {
            let seed = seed.unwrap_or(config.master_seed);
            let mut rng = RngStream::for_repetition(seed, repetition as u64, INIT_STREAM);
            synth_init(config.vocab_size, *target_entropy, *family, &mut rng)?
        }
        InitSpec::File { path, index } => {
            let records = io::count_rows(path)?;
            if records == 0 {
                return Err(LabError::Format {
                    path: path.clone(),
                    line: 1,
                    message: "no logit records".into(),
                });
            }
            load_logits(path, (index + repetition) % records)?
        }
    };
    if logits.vocab_size() != config.vocab_size {
        return Err(LabError::invalid(format!(
            "initial logits have {} entries but vocab_size is {}",
            logits.vocab_size(),
            config.vocab_size
        )));
    }
    Ok(logits)
}

/// The reward of a repetition, built against its initial distribution.
pub fn build_reward(config: &ExperimentConfig, initial: &VocabDistribution) -> Result<RewardSpec> {
    match &config.reward {
        RewardSource::Constant { value, .. } => RewardSpec::constant(*value),
        RewardSource::Simulated { target_rank } => RewardSpec::build_simulated(initial, *target_rank),
        RewardSource::Table { path, index, .. } => {
            RewardSpec::load_table(path, *index, Some(config.vocab_size))
        }
    }
}

fn target_token(config: &ExperimentConfig, reward: &RewardSpec, initial: &VocabDistribution) -> Result<TokenId> {
    if let Some(best) = reward.y_best() {
        return Ok(best);
    }
    let rank = config.reward.target_rank();
    if rank == 0 || rank > initial.vocab_size() {
        return Err(LabError::Config(format!(
            "reward.target_rank must lie in [1, {}]",
            initial.vocab_size()
        )));
    }
    Ok(initial.top_tokens(rank)[rank - 1])
}

fn tracked_tokens(
    config: &ExperimentConfig,
    reward: &RewardSpec,
    initial: &VocabDistribution,
) -> Result<Vec<TrackedToken>> {
    let n = config.tracked_ranks.min(initial.vocab_size());
    initial
        .top_tokens(n)
        .into_iter()
        .enumerate()
        .map(|(i, token)| {
            let class = match reward {
                RewardSpec::Simulated { y_best, top_set, .. } => {
                    if token == *y_best {
                        TokenClass::Best
                    } else if top_set.contains(&token) {
                        TokenClass::Top
                    } else {
                        TokenClass::Other
                    }
                }
                _ => TokenClass::Other,
            };
            Ok(TrackedToken {
                column: i,
                token,
                initial_rank: i + 1,
                reward: reward.evaluate(token)?,
                class,
            })
        })
        .collect()
}

fn metric_row(
    config: &ExperimentConfig,
    repetition: usize,
    step: usize,
    dist: &VocabDistribution,
    target: TokenId,
    tracked: &[TrackedToken],
) -> Result<MetricRow> {
    let report = peakiness(dist, config.metric_top_k)?;
    Ok(MetricRow {
        repetition,
        step,
        mode_prob: report.mode_prob,
        top10_mass: report.top_k_mass,
        entropy_nats: report.entropy_nats,
        p_best: dist.prob(target)?,
        rank_best: dist.rank_of(target)?,
        tracked_probs: tracked.iter().map(|t| dist.probs()[t.token.0]).collect(),
    })
}

enum Estimator {
    Reinforce(Baseline),
    Cmrt(CmrtParams),
}

impl Estimator {
    fn from_spec(spec: &EstimatorSpec) -> Result<Self> {
        Ok(match spec {
            EstimatorSpec::Reinforce { baseline, .. } => Estimator::Reinforce(Baseline::new(*baseline)?),
            EstimatorSpec::Cmrt { alpha, dedup, .. } => Estimator::Cmrt(CmrtParams::new(*alpha, *dedup)?),
        })
    }
}

/// Trains one repetition. Depends only on the config and `repetition`.
pub fn run_repetition(config: &ExperimentConfig, repetition: usize) -> Result<RepetitionResult> {
    config.validate()?;
    let initial = initial_logits(config, repetition)?;
    let mut dist = initial.to_distribution();
    let reward = build_reward(config, &dist)?;
    reward.check_compatible(config.vocab_size)?;
    let target = target_token(config, &reward, &dist)?;
    let tracked = tracked_tokens(config, &reward, &dist)?;
    let estimator = Estimator::from_spec(&config.estimator)?;
    let k = config.estimator.k();
    let mut rng = RngStream::for_repetition(config.master_seed, repetition as u64, TRAIN_STREAM);

    let mut logits = initial.clone();
    let mut sampler = dist.sampler();
    let mut rows = vec![metric_row(config, repetition, 0, &dist, target, &tracked)?];
    let mut aborted = None;
    let mut fresh = true;
    let mut stale = false;
    let mut updates = 0usize;
    for step in 1..=config.steps {
        if !fresh {
            sampler.refill(dist.probs());
            fresh = true;
        }
        let batch = SampleBatch::new((0..k).map(|_| sampler.draw(&mut rng)).collect())?;
        let comb = match &estimator {
            Estimator::Reinforce(b) => reinforce_combination(&dist, &batch, &reward, *b)?,
            Estimator::Cmrt(p) => cmrt_combination(&dist, &batch, &reward, *p)?,
        };
        if comb.terms().iter().any(|&(_, c)| c != 0.0) {
            ascend_incremental(&mut logits, &mut dist, &comb, config.lr)?;
            let blown = comb
                .terms()
                .iter()
                .map(|&(t, _)| logits.as_slice()[t.0])
                .any(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT);
            if blown || (step % config.record_every == 0 && logits.max_abs() > OVERFLOW_LIMIT) {
                let msg = format!("repetition {repetition}: logits overflowed at step {step}");
                log::warn!("{msg}");
                let mut row = rows.last().expect("step 0 recorded").clone();
                row.step = step;
                rows.push(row);
                aborted = Some(msg);
                break;
            }
            updates += 1;
            if updates % REFRESH_INTERVAL == 0 {
                logits.distribution_into(&mut dist);
            }
            fresh = false;
            stale = true;
        }
        if step % config.record_every == 0 || step == config.steps {
            if stale {
                logits.distribution_into(&mut dist);
                stale = false;
                fresh = false;
            }
            rows.push(metric_row(config, repetition, step, &dist, target, &tracked)?);
        }
    }
    Ok(RepetitionResult {
        repetition,
        rows,
        initial,
        final_logits: logits,
        target,
        tracked,
        aborted,
    })
}

/// Runs every repetition (in parallel) and returns them in repetition order.
pub fn run_training(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let repetitions = (0..config.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(config, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutput { repetitions })
}

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const INITIAL_SNAPSHOTS_FILE: &str = "snapshots_initial.jsonl";
pub const FINAL_SNAPSHOTS_FILE: &str = "snapshots_final.jsonl";
pub const TARGETS_FILE: &str = "targets.txt";
pub const TRACKED_FILE: &str = "tracked_classes.csv";
pub const CONFIG_FILE: &str = "config.toml";

impl RunOutput {
    pub fn rows(&self) -> impl Iterator<Item = &MetricRow> {
        self.repetitions.iter().flat_map(|r| r.rows.iter())
    }

    pub fn trajectory_csv(&self) -> Result<Vec<u8>> {
        let tracked = self.repetitions.first().map_or(0, |r| r.tracked.len());
        let names: Vec<String> = (0..tracked).map(|i| format!("tracked_{i}")).collect();
        let mut header = vec![
            "repetition",
            "step",
            "mode_prob",
            "top10_mass",
            "entropy_nats",
            "p_best",
            "rank_best",
        ];
        header.extend(names.iter().map(String::as_str));
        csv_bytes(
            &header,
            self.rows().map(|row| {
                let mut rec = vec![
                    row.repetition.to_string(),
                    row.step.to_string(),
                    row.mode_prob.to_string(),
                    row.top10_mass.to_string(),
                    row.entropy_nats.to_string(),
                    row.p_best.to_string(),
                    row.rank_best.to_string(),
                ];
                rec.extend(row.tracked_probs.iter().map(|p| p.to_string()));
                rec
            }),
        )
    }

    pub fn tracked_csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["repetition", "column", "token", "initial_rank", "reward", "class"],
            self.repetitions.iter().flat_map(|r| {
                r.tracked.iter().map(move |t| {
                    vec![
                        r.repetition.to_string(),
                        t.column.to_string(),
                        t.token.to_string(),
                        t.initial_rank.to_string(),
                        t.reward.to_string(),
                        t.class.as_str().to_string(),
                    ]
                })
            }),
        )
    }

    /// Writes all run artifacts into `out_dir`, creating it if needed.
    pub fn write_to(&self, out_dir: &Path, config: &ExperimentConfig) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|e| LabError::io(out_dir, e))?;
        io::write_atomic(&out_dir.join(TRAJECTORY_FILE), &self.trajectory_csv()?)?;
        io::write_atomic(&out_dir.join(TRACKED_FILE), &self.tracked_csv()?)?;
        let initial: Vec<PolicyLogits> = self.repetitions.iter().map(|r| r.initial.clone()).collect();
        let finals: Vec<PolicyLogits> = self.repetitions.iter().map(|r| r.final_logits.clone()).collect();
        write_logits(&out_dir.join(INITIAL_SNAPSHOTS_FILE), &initial)?;
        write_logits(&out_dir.join(FINAL_SNAPSHOTS_FILE), &finals)?;
        let mut targets = String::new();
        for r in &self.repetitions {
            writeln!(targets, "{}", r.target).expect("writing to a String");
        }
        io::write_atomic(&out_dir.join(TARGETS_FILE), targets.as_bytes())?;
        io::write_atomic(&out_dir.join(CONFIG_FILE), config.to_toml_string()?.as_bytes())?;
        Ok(())
    }
}
