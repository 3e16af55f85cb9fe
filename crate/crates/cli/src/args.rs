use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use robustwf::experiment::BoundMapping;
use robustwf::solver::ScheduleKind;

#[derive(Debug, Parser)]
#[command(name = "robustwf", version, about = "Robust iterative waterfilling simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the configured game and write the equilibrium profile.
    Solve(SolveArgs),
    /// Print the uniqueness and contraction conditions of the configured game.
    Check(CheckArgs),
    /// Tabulate the two-user anti-symmetric system over an uncertainty grid.
    TwoUser(TwoUserArgs),
    /// Run the Monte-Carlo comparison of robust, nominal and perfect solutions.
    Experiment(ExperimentArgs),
}

fn schedule_kind(s: &str) -> Result<ScheduleKind, String> {
    s.parse().map_err(|e: robustwf::Error| e.to_string())
}

fn bound_mapping(s: &str) -> Result<BoundMapping, String> {
    s.parse().map_err(|e: robustwf::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Run configuration file.
    pub config: PathBuf,
    /// Update schedule: jacobi, gauss_seidel or random_async.
    #[arg(long, value_parser = schedule_kind)]
    pub schedule: Option<ScheduleKind>,
    /// Seed of the random asynchronous schedule.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-round update probability (random_async).
    #[arg(long)]
    pub update_probability: Option<f64>,
    /// Largest staleness in rounds (random_async).
    #[arg(long)]
    pub max_staleness: Option<usize>,
    /// Convergence tolerance on the per-round change.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Round limit before giving up.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Write the per-round trajectory CSV here.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Write the profile CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Domains {
    /// Drop bins a user provably never uses.
    Estimated,
    /// Use every bin.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Weights {
    Ones,
    Perron,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Run configuration file.
    pub config: PathBuf,
    #[arg(long, value_enum, default_value_t = Domains::Estimated)]
    pub domains: Domains,
    /// Weights of the contraction norm.
    #[arg(long, value_enum, default_value_t = Weights::Ones)]
    pub weights: Weights,
}

/// Coupling of the two-user system: a value or the critical coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Crit,
    Value(f64),
}

fn alpha(s: &str) -> Result<Alpha, String> {
    if s == "crit" {
        return Ok(Alpha::Crit);
    }
    s.parse()
        .map(Alpha::Value)
        .map_err(|_| format!("'{s}' is neither a number nor 'crit'"))
}

#[derive(Debug, Args)]
pub struct TwoUserArgs {
    /// Noise power on every bin.
    #[arg(long)]
    pub sigma2: f64,
    /// Coupling, or `crit` for the allocation-independent coupling.
    #[arg(long, value_parser = alpha)]
    pub alpha: Alpha,
    /// Cross-gain ratio between the two bins.
    #[arg(long, default_value_t = 2.0)]
    pub m: f64,
    /// Uncertainty grid: start:stop:step, a comma list or a value.
    #[arg(long, default_value = "0:0.1:0.01")]
    pub eps_grid: String,
    /// Quanta per user of the brute-force social optimum.
    #[arg(long, default_value_t = 200)]
    pub bruteforce_steps: usize,
    /// Solver tolerance.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentSchedule {
    Jacobi,
    GaussSeidel,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Number of users.
    #[arg(long, default_value_t = 3)]
    pub users: usize,
    /// Number of frequency bins.
    #[arg(long, default_value_t = 16)]
    pub freqs: usize,
    /// Relative error widths: start:stop:step, a comma list or a value.
    #[arg(long, default_value = "0:0.6:0.2")]
    pub delta_grid: String,
    /// Trials per error width.
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    /// Master seed; per-trial seeds derive from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for trials.csv and summary.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Power budget of every user.
    #[arg(long, default_value_t = 1.0)]
    pub power: f64,
    /// Spectral mask on every bin.
    #[arg(long, default_value_t = 1.0)]
    pub pmax: f64,
    /// Uncertainty bounds: per-bin or per-user.
    #[arg(long, value_parser = bound_mapping, default_value = "per-bin")]
    pub bounds: BoundMapping,
    /// Update schedule of every solve.
    #[arg(long, value_enum, default_value_t = ExperimentSchedule::GaussSeidel)]
    pub schedule: ExperimentSchedule,
}
