//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Thresholds are fixed constants below.

mod common;

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use peaklab::counterexample::{ce_sample_table, ce_summary, CeSample, CeTheta, REWARDS};
use peaklab::estimators::{
    cmrt_gradient, exact_reward_gradient, reinforce_gradient, Baseline, CmrtParams,
};
use peaklab::lab::{
    run_training, single_step_study, EstimatorSpec, ExperimentConfig, InitSpec, LogitFamily,
    RewardSource, RunOutput,
};
use peaklab::{PolicyLogits, RewardSpec, RngStream, SampleBatch, TokenId};
use rand::Rng;

const VOCAB: usize = 30715;
const INIT_ENTROPY: f64 = 2.9;
const INIT_FAMILY: LogitFamily = LogitFamily::Gaussian;
const LR: f64 = 0.1;
const REPS: usize = 20;
const REINFORCE_STEPS: usize = 100_000;
const CMRT_STEPS: usize = 50_000;

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn counterexample_exactness(report: &mut Report) {
    let start = Instant::now();
    let s = ce_summary().expect("counterexample summary");
    let elapsed = start.elapsed();
    let pass = (s.theta_star - 0.25).abs() <= 1e-4
        && (0.290..=0.300).contains(&s.gamma)
        && (0.31..=0.33).contains(&s.rtilde_argmax)
        && (s.reward_slope_at_gamma + 0.09).abs() <= 0.01
        && elapsed < Duration::from_secs(1);
    report.check(
        "counterexample exactness",
        pass,
        format!(
            "theta*={:.6} gamma={:.6} argmax E[Rtilde]={:.6} dR/dtheta(gamma)={:.6} in {:?}",
            s.theta_star, s.gamma, s.rtilde_argmax, s.reward_slope_at_gamma, elapsed
        ),
    );
}

/// Ordered-pair enumeration over the three-outcome family, with
/// `R̃ = Σ P(y) r(y) / Σ P(y)` over the distinct outcomes of the pair.
fn table_oracle(theta: f64, sample: CeSample) -> (f64, f64) {
    let probs = |t: f64| [t, 2.0 * t * t, 1.0 - t - 2.0 * t * t];
    let (x, y) = sample.outcomes();
    let (x, y) = (x.index(), y.index());
    let p = probs(theta);
    let prob: f64 = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .filter(|&(i, j)| (i == x && j == y) || (i == y && j == x))
        .map(|(i, j)| p[i] * p[j])
        .sum();
    let rtilde = |t: f64| {
        let p = probs(t);
        if x == y {
            REWARDS[x]
        } else {
            (p[x] * REWARDS[x] + p[y] * REWARDS[y]) / (p[x] + p[y])
        }
    };
    (prob, rtilde(theta))
}

fn table_equivalence(report: &mut Report) {
    let mut rng = RngStream::new(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let theta = rng.random_range(0.01..0.49);
        let rows = ce_sample_table(CeTheta::new(theta).unwrap()).unwrap();
        for row in rows {
            let (prob, rtilde) = table_oracle(theta, row.sample);
            let h = 1e-6;
            let grad = (table_oracle(theta + h, row.sample).1 - table_oracle(theta - h, row.sample).1)
                / (2.0 * h);
            worst = worst
                .max((row.prob - prob).abs())
                .max((row.rtilde - rtilde).abs())
                .max((row.grad_rtilde - grad).abs());
        }
    }
    report.check(
        "Table 1 equivalence",
        worst <= 1e-8,
        format!("max deviation {worst:.3e} over 100 theta x 6 batches"),
    );
}

fn reinforce_unbiasedness(report: &mut Report) {
    let mut rng = RngStream::new(77);
    let mut worst: f64 = 0.0;
    for n in 3..=6 {
        for k in 1..=2usize {
            for _ in 0..10 {
                let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
                let b = rng.random_range(-1.0..1.0);
                let dist = PolicyLogits::new(theta.clone()).unwrap().to_distribution();
                let spec = RewardSpec::table(r.clone()).unwrap();
                let mut mean = vec![0.0; n];
                for code in 0..n.pow(k as u32) {
                    let tokens: Vec<usize> = (0..k).map(|i| code / n.pow(i as u32) % n).collect();
                    let w: f64 = tokens.iter().map(|&t| common::prob(&theta, t)).product();
                    let batch = SampleBatch::new(tokens.iter().map(|&t| TokenId(t)).collect()).unwrap();
                    let g = reinforce_gradient(&dist, &batch, &spec, Baseline::new(b).unwrap()).unwrap();
                    for (m, v) in mean.iter_mut().zip(g.as_slice()) {
                        *m += w * v;
                    }
                }
                worst = worst.max(common::max_abs_diff(&mean, &common::exact_gradient(&theta, &r)));
            }
        }
    }
    report.check(
        "REINFORCE unbiasedness",
        worst <= 1e-10,
        format!("max |E[g] - grad R| = {worst:.3e} for V in 3..=6, k in 1..=2"),
    );
}

fn gradient_checks(report: &mut Report) {
    let mut rng = RngStream::new(31);
    let (mut score, mut exact, mut cmrt) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = 2 + (rng.uniform() * 9.0) as usize;
        let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        let dist = PolicyLogits::new(theta.clone()).unwrap().to_distribution();
        let spec = RewardSpec::table(r.clone()).unwrap();

        let y = (rng.uniform() * n as f64) as usize;
        let g = dist.log_prob_gradient(TokenId(y)).unwrap();
        let fd = common::central_difference(&theta, |t| common::prob(t, y).ln());
        score = score.max(common::max_abs_diff(g.as_slice(), &fd));

        let g = exact_reward_gradient(&dist, &spec).unwrap();
        let fd = common::central_difference(&theta, |t| common::expected_reward(t, &r));
        exact = exact.max(common::max_abs_diff(g.as_slice(), &fd));

        let k = 1 + (rng.uniform() * 6.0) as usize;
        let tokens: Vec<usize> = (0..k).map(|_| (rng.uniform() * n as f64) as usize).collect();
        let alpha = rng.random_range(0.005..1.5);
        let batch = SampleBatch::new(tokens.iter().map(|&t| TokenId(t)).collect()).unwrap();
        let g = cmrt_gradient(&dist, &batch, &spec, CmrtParams::new(alpha, true).unwrap()).unwrap();
        let support = common::distinct(&tokens);
        let fd = common::central_difference(&theta, |t| common::rtilde(t, &support, &r, alpha));
        cmrt = cmrt.max(common::max_abs_diff(g.as_slice(), &fd));
    }
    report.check(
        "gradient checks",
        score <= 1e-6 && exact <= 1e-6 && cmrt <= 1e-6,
        format!("max FD deviation: log-prob {score:.2e}, exact {exact:.2e}, CMRT {cmrt:.2e}"),
    );
}

fn base_config() -> ExperimentConfig {
    ExperimentConfig {
        vocab_size: VOCAB,
        init: InitSpec::Synthetic {
            target_entropy: INIT_ENTROPY,
            family: INIT_FAMILY,
            seed: None,
        },
        lr: LR,
        repetitions: REPS,
        ..ExperimentConfig::default()
    }
}

fn peakiness_effect(report: &mut Report) {
    let start = Instant::now();
    let config = ExperimentConfig {
        reward: RewardSource::Constant { value: 1.0, target_rank: None },
        estimator: EstimatorSpec::Reinforce { k: 1, baseline: 0.0 },
        ..base_config()
    };
    let deltas = single_step_study(&config, 10_000).expect("single-step study");
    let elapsed = start.elapsed();
    let n = deltas.len() as f64;
    let mean_dh = deltas.iter().map(|d| d.delta_entropy).sum::<f64>() / n;
    let mean_top = deltas.iter().map(|d| d.delta_top10_mass).sum::<f64>() / n;
    let share = deltas.iter().filter(|d| d.delta_top10_mass > 0.0).count() as f64 / n;
    report.check(
        "peakiness effect (sampled)",
        mean_dh < 0.0 && mean_top > 0.0 && share >= 0.75 && elapsed < Duration::from_secs(300),
        format!(
            "mean dH={mean_dh:.4e} mean dTop10={mean_top:.4e} share dTop10>0={share:.4} in {elapsed:.1?}"
        ),
    );

    // exhaustive expectation over the sampled token for peaked 6-token policies
    let mut rng = RngStream::new(6);
    let mut worst = f64::INFINITY;
    let mut tried = 0;
    while tried < 1000 {
        let theta: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = common::probs(&theta);
        let before = p.iter().copied().fold(0.0, f64::max);
        if before < 0.5 {
            continue;
        }
        tried += 1;
        let after: f64 = (0..6)
            .map(|y| p[y] * common::mode_after_step(&theta, y, 1.0, 0.0, LR))
            .sum();
        worst = worst.min(after - before);
    }
    report.check(
        "peakiness effect (V=6 exact)",
        worst > 0.0,
        format!("min E[d mode] over 1000 peaked inits = {worst:.4e}"),
    );
}

fn simulated(rank: usize, estimator: EstimatorSpec, steps: usize) -> RunOutput {
    let config = ExperimentConfig {
        reward: RewardSource::Simulated { target_rank: rank },
        estimator,
        steps,
        record_every: CMRT_STEPS,
        ..base_config()
    };
    let start = Instant::now();
    let out = run_training(&config).expect("training run");
    println!("  (rank {rank}, {steps} steps x {REPS} reps in {:.1?})", start.elapsed());
    out
}

fn converged_share(out: &RunOutput) -> f64 {
    let hits = out.repetitions.iter().filter(|r| r.last_row().rank_best == 1).count();
    hits as f64 / out.repetitions.len() as f64
}

fn mean_entropy_drop_at(out: &RunOutput, step: usize) -> f64 {
    let drops: Vec<f64> = out
        .repetitions
        .iter()
        .map(|r| {
            let at = r.rows.iter().find(|row| row.step == step).expect("matched step recorded");
            r.first_row().entropy_nats - at.entropy_nats
        })
        .collect();
    drops.iter().sum::<f64>() / drops.len() as f64
}

fn reinforce_and_cmrt(report: &mut Report) {
    let reinforce = EstimatorSpec::Reinforce { k: 1, baseline: 0.0 };
    let rank2 = simulated(2, reinforce.clone(), REINFORCE_STEPS);
    let rank4 = simulated(4, reinforce.clone(), REINFORCE_STEPS);
    let rank5 = simulated(5, reinforce, REINFORCE_STEPS);

    let s2 = converged_share(&rank2);
    let s4 = converged_share(&rank4);
    let gain5 = rank5
        .repetitions
        .iter()
        .map(|r| r.last_row().p_best - r.first_row().p_best)
        .sum::<f64>()
        / REPS as f64;
    report.check(
        "convergence by rank",
        s2 >= 0.9 && s4 <= 0.5 && gain5 < 0.05,
        format!("rank 2 mode share {s2:.2} (>=0.90), rank 4 {:.2} (<=0.50), rank 5 mean p_best gain {gain5:.4} (<0.05)", s4),
    );

    let collapsed = rank2
        .repetitions
        .iter()
        .filter(|r| r.last_row().entropy_nats < 0.01)
        .count() as f64
        / REPS as f64;
    let finals: Vec<String> = rank2
        .repetitions
        .iter()
        .map(|r| format!("{:.4}", r.last_row().entropy_nats))
        .collect();
    report.check(
        "entropy collapse",
        collapsed >= 0.8,
        format!("share with final entropy < 0.01: {collapsed:.2} (>=0.80); finals [{}]", finals.join(" ")),
    );

    let cmrt = EstimatorSpec::Cmrt { k: 20, alpha: 0.005, dedup: true };
    let c2 = simulated(2, cmrt.clone(), CMRT_STEPS);
    let c3 = simulated(3, cmrt, CMRT_STEPS);
    let cs2 = converged_share(&c2);
    let cs3 = converged_share(&c3);
    let cmrt_drop = mean_entropy_drop_at(&c2, CMRT_STEPS);
    let reinforce_drop = mean_entropy_drop_at(&rank2, CMRT_STEPS);
    report.check(
        "CMRT simulation",
        cs2 >= 0.8 && cs3 <= 0.5 && cmrt_drop < reinforce_drop,
        format!(
            "rank 2 mode share {cs2:.2} (>=0.80), rank 3 {cs3:.2} (<=0.50), mean entropy drop at {CMRT_STEPS} steps {cmrt_drop:.4} vs REINFORCE {reinforce_drop:.4}"
        ),
    );
}

fn simulate_csv(dir: &Path, seed: &str) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_peaklab"))
        .args(["simulate", "--seed", seed, "--out-dir"])
        .arg(dir)
        .args(["--set", "vocab_size=2000", "--set", "steps=500", "--set", "repetitions=3"])
        .args(["--set", "record_every=50", "--set", "estimator.kind=cmrt"])
        .output()
        .expect("peaklab runs");
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    std::fs::read(dir.join("trajectory.csv")).expect("trajectory written")
}

fn determinism(report: &mut Report) {
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    let a = simulate_csv(dirs[0].path(), "7");
    let b = simulate_csv(dirs[1].path(), "7");
    report.check(
        "determinism",
        a == b && !a.is_empty(),
        format!("two `simulate --seed 7` runs: {} bytes, identical={}", a.len(), a == b),
    );
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    counterexample_exactness(&mut report);
    table_equivalence(&mut report);
    reinforce_unbiasedness(&mut report);
    gradient_checks(&mut report);
    determinism(&mut report);
    peakiness_effect(&mut report);
    reinforce_and_cmrt(&mut report);
    if report.failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", report.failures);
        ExitCode::FAILURE
    }
}
