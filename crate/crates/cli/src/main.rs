use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

use output::CliError;

#[derive(Parser)]
#[command(name = "qprobe", version, about = "First-detection statistics of quantum systems probed at random times")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detection probability, attempt and time moments, and diagnostics (JSON).
    Stats(StatsArgs),
    /// Interval-averaged detection series <F_n>, n = 1..nmax.
    Fn(FnArgs),
    /// Statistics over a grid of mean intervals or Gamma shapes (CSV).
    Sweep(SweepArgs),
    /// Monte Carlo trajectories.
    Mc(McArgs),
    /// Run the built-in check suites.
    Verify(VerifyArgs),
}

/// Model and interval distribution; flags override `--config`.
#[derive(Args, Debug, Clone, Default)]
pub struct ProblemArgs {
    /// key = value file (kind, L, gamma, x_in, x_d, dist, tau, mean, alpha, seed, ...)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ring | tls | dense
    #[arg(long = "model")]
    pub kind: Option<String>,
    #[arg(long = "L")]
    pub l: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub xin: Option<usize>,
    #[arg(long)]
    pub xd: Option<usize>,
    /// return | arrival (tls models)
    #[arg(long)]
    pub problem: Option<String>,
    /// fixed | exp | gamma
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub mean: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub degeneracy_tol: Option<f64>,
    /// Extra config entries, e.g. --set matrix="0 0, 1 0, 1 0, 0 0"
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct OutputArgs {
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Fall back to a truncated-SVD pseudo-inverse when J is ill-conditioned.
    #[arg(long)]
    pub pseudo_inverse: bool,
    #[arg(long, default_value_t = qprobe_core::superop::DEFAULT_ZERO_TOL)]
    pub zero_tol: f64,
}

#[derive(Args, Debug)]
pub struct FnArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, default_value_t = 100)]
    pub nmax: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Mean,
    Alpha,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, value_enum, default_value_t = Axis::Mean)]
    pub axis: Axis,
    /// start:stop:step or a comma-separated list, strictly increasing.
    #[arg(long)]
    pub grid: String,
    /// Comma-separated subset of p_det,n_mean,n_sq,t_mean,t_sq,lambda_max
    #[arg(long, default_value = "p_det,n_mean,n_sq,t_mean,t_sq")]
    pub outputs: String,
    #[arg(long)]
    pub pseudo_inverse: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum McMode {
    Bernoulli,
    PerRealization,
}

#[derive(Args, Debug)]
pub struct McArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Summary JSON destination.
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, value_enum, default_value_t = McMode::PerRealization)]
    pub mode: McMode,
    #[arg(long, default_value_t = 100_000)]
    pub nreal: usize,
    /// Attempts propagated per realization (per-realization mode).
    #[arg(long, default_value_t = 1000)]
    pub n_cut: usize,
    /// Attempt cap per realization (bernoulli mode).
    #[arg(long, default_value_t = qprobe_core::trajectory::DEFAULT_N_ABORT)]
    pub n_abort: u64,
    /// Length of the <F_n> estimate written with --series.
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Per-realization records CSV.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// <F_n> estimate with standard errors, CSV.
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Histogram of per-realization n-bar (per-realization mode), CSV.
    #[arg(long)]
    pub hist: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub bin_width: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyLevel {
    Quick,
    Full,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = VerifyLevel::Quick)]
    pub level: VerifyLevel,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("QPROBE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("QPROBE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Stats(a) => commands::stats(a),
        Command::Fn(a) => commands::series(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Mc(a) => commands::mc(a),
        Command::Verify(a) => commands::verify(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qprobe: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
