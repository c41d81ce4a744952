//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage, config or
//! input errors. Config precedence, lowest to highest: built-in defaults,
//! the `--config` file, `--set key=value` overrides, `--seed`.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::counterexample::{ce_grid, ce_summary};
use crate::error::LabError;
use crate::io::{read_indices, write_atomic};
use crate::lab::config::ExperimentConfig;
use crate::lab::init::read_all_logits;
use crate::lab::single_step::{deltas_csv, single_step_study};
use crate::lab::train::run_training;
use crate::policy::{TokenId, VocabDistribution};
use crate::report::{ce_grid_csv, mode_cdf_csv, rank_cdf_csv, rank_diff_csv};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "peaklab", version, about = "Policy-gradient peakiness lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train policies and write trajectories and snapshots.
    Simulate(ExperimentArgs),
    /// Apply one update to many initial policies and record the change.
    SingleStep {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Number of initial policies.
        #[arg(long, default_value_t = 10_000)]
        n_inits: usize,
    },
    /// Analytics for the three-outcome counterexample.
    Counterexample {
        /// Directory for the θ-grid CSV.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Number of θ grid points on [0, 0.5].
        #[arg(long, default_value_t = 101)]
        grid_points: usize,
    },
    /// Mode and rank analytics over before/after snapshot files.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set estimator.k=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// JSON-lines logits before training.
    #[arg(long)]
    pub before: PathBuf,
    /// JSON-lines logits after training, aligned with `--before`.
    #[arg(long)]
    pub after: PathBuf,
    /// One target token index per line, aligned with the snapshots.
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Largest rank tabulated individually.
    #[arg(long, default_value_t = 20)]
    pub max_rank: usize,
    /// Keep contexts whose target is already ranked first in the rank CDF.
    #[arg(long)]
    pub include_rank1: bool,
    /// Number of x grid points for the mode CDF.
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
}

/// An error tagged with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: LabError,
}

fn usage(error: LabError) -> Failure {
    Failure { code: EXIT_USAGE, error }
}

fn runtime(error: LabError) -> Failure {
    Failure { code: EXIT_RUNTIME, error }
}

type CliResult<T> = std::result::Result<T, Failure>;

impl ExperimentArgs {
    fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("master_seed={seed}"));
        }
        let config = match &self.config {
            Some(path) => ExperimentConfig::load(path, &overrides),
            None => ExperimentConfig::resolve(None, &overrides),
        };
        config.map_err(usage)
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| usage(LabError::io(dir, e)))
}

fn simulate(args: &ExperimentArgs) -> CliResult<()> {
    let config = args.resolve()?;
    ensure_dir(&args.out_dir)?;
    log::info!(
        "simulating {} repetitions of {} steps",
        config.repetitions,
        config.steps
    );
    let out = run_training(&config).map_err(runtime)?;
    for rep in &out.repetitions {
        if let Some(msg) = &rep.aborted {
            eprintln!("warning: {msg}");
        }
    }
    out.write_to(&args.out_dir, &config).map_err(runtime)?;
    println!(
        "wrote {} rows to {}",
        out.rows().count(),
        args.out_dir.join(crate::lab::train::TRAJECTORY_FILE).display()
    );
    Ok(())
}

pub const SINGLE_STEP_FILE: &str = "single_step.csv";

fn single_step(args: &ExperimentArgs, n_inits: usize) -> CliResult<()> {
    let config = args.resolve()?;
    if n_inits == 0 {
        return Err(usage(LabError::Config("--n-inits must be at least 1".into())));
    }
    ensure_dir(&args.out_dir)?;
    let deltas = single_step_study(&config, n_inits).map_err(runtime)?;
    let path = args.out_dir.join(SINGLE_STEP_FILE);
    write_atomic(&path, &deltas_csv(&deltas).map_err(runtime)?).map_err(runtime)?;
    let n = deltas.len() as f64;
    let mean = |f: fn(&crate::lab::SingleStepDelta) -> f64| deltas.iter().map(f).sum::<f64>() / n;
    let positive = deltas.iter().filter(|d| d.delta_top10_mass > 0.0).count() as f64 / n;
    println!("inits                   {}", deltas.len());
    println!("mean delta entropy      {:.6e}", mean(|d| d.delta_entropy));
    println!("mean delta top10 mass   {:.6e}", mean(|d| d.delta_top10_mass));
    println!("mean delta mode prob    {:.6e}", mean(|d| d.delta_mode_prob));
    println!("share top10 increased   {positive:.4}");
    println!("wrote {}", path.display());
    Ok(())
}

pub const CE_GRID_FILE: &str = "counterexample_grid.csv";

fn counterexample(out_dir: &Path, grid_points: usize) -> CliResult<()> {
    if grid_points < 2 {
        return Err(usage(LabError::Config("--grid-points must be at least 2".into())));
    }
    let summary = ce_summary().map_err(runtime)?;
    ensure_dir(out_dir)?;
    let path = out_dir.join(CE_GRID_FILE);
    let rows = ce_grid(grid_points).map_err(runtime)?;
    write_atomic(&path, &ce_grid_csv(&rows).map_err(runtime)?).map_err(runtime)?;
    println!("theta_star              {:.6}", summary.theta_star);
    println!("gamma                   {:.6}", summary.gamma);
    println!("rtilde_argmax           {:.6}", summary.rtilde_argmax);
    println!("dR/dtheta at gamma      {:.6}", summary.reward_slope_at_gamma);
    println!("wrote {}", path.display());
    Ok(())
}

pub const MODE_CDF_FILE: &str = "mode_cdf.csv";
pub const RANK_CDF_FILE: &str = "rank_cdf.csv";
pub const RANK_DIFF_FILE: &str = "rank_diff.csv";

fn load_snapshots(path: &Path) -> CliResult<Vec<VocabDistribution>> {
    Ok(read_all_logits(path)
        .map_err(usage)?
        .iter()
        .map(|l| l.to_distribution())
        .collect())
}

fn analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let before = load_snapshots(&args.before)?;
    let after = load_snapshots(&args.after)?;
    let targets: Vec<TokenId> = read_indices(&args.targets)
        .map_err(usage)?
        .into_iter()
        .map(TokenId)
        .collect();
    if before.len() != after.len() || before.len() != targets.len() {
        return Err(usage(LabError::invalid(format!(
            "{} before snapshots, {} after snapshots and {} targets must match",
            before.len(),
            after.len(),
            targets.len()
        ))));
    }
    for (i, (b, a)) in before.iter().zip(&after).enumerate() {
        if b.vocab_size() != a.vocab_size() {
            return Err(usage(LabError::invalid(format!(
                "snapshot {i}: vocabulary sizes {} and {} differ",
                b.vocab_size(),
                a.vocab_size()
            ))));
        }
        b.check_token(targets[i]).map_err(usage)?;
    }
    if args.max_rank == 0 || args.grid_points < 2 {
        return Err(usage(LabError::Config(
            "--max-rank must be at least 1 and --grid-points at least 2".into(),
        )));
    }
    ensure_dir(&args.out_dir)?;
    let outputs = [
        (MODE_CDF_FILE, mode_cdf_csv(&before, &after, args.grid_points)),
        (
            RANK_CDF_FILE,
            rank_cdf_csv(&before, &after, &targets, args.max_rank, args.include_rank1),
        ),
        (RANK_DIFF_FILE, rank_diff_csv(&before, &after, &targets, args.max_rank)),
    ];
    for (name, bytes) in outputs {
        let path = args.out_dir.join(name);
        write_atomic(&path, &bytes.map_err(usage)?).map_err(runtime)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Runs a parsed command.
pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::SingleStep { experiment, n_inits } => single_step(experiment, *n_inits),
        Command::Counterexample { out_dir, grid_points } => counterexample(out_dir, *grid_points),
        Command::Analyze(args) => analyze(args),
    }
}

/// Parses `std::env::args`, runs the command and reports failures on
/// standard error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
