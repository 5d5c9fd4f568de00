use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use wsep::Subordination;

const EXIT_STATUSES: &str = "\
Exit status:
  0  success, every verification flag passed
  1  verification failure (a flag in the report failed)
  2  usage error (invalid flags or configuration)
  3  numeric, generation or I/O failure (e.g. circulant embedding failed)
  4  hypothesis or degeneracy violation (D >= 1/m, rank undetected, Lambda(0) = 0)";

#[derive(Debug, Parser)]
#[command(
    name = "wsep",
    version,
    about = "Simulate long-memory Gaussian subordinated sequences and check weighted empirical-process limits",
    after_help = EXIT_STATUSES
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one Gaussian path and its subordinated sample (CSV: j, x, y).
    #[command(after_help = EXIT_STATUSES)]
    Simulate(SimulateArgs),
    /// Tabulate Hermite coefficients J_q(x) and sup |w J_q|.
    #[command(after_help = EXIT_STATUSES)]
    Coefficients(CoefficientArgs),
    /// Tail probabilities of the weighted reduction remainder and second moments.
    #[command(after_help = EXIT_STATUSES)]
    VerifyReduction(ExperimentArgs),
    /// KS distances of the normalized empirical process to its limit law.
    #[command(after_help = EXIT_STATUSES)]
    VerifyLimit(ExperimentArgs),
    /// Build and check the refining chain grids on both half-lines.
    #[command(after_help = EXIT_STATUSES)]
    ChainGrid(ChainArgs),
    /// Configuration file utilities.
    Config(ConfigArgs),
}

fn parse_hurst(s: &str) -> Result<f64, String> {
    let h: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if h > 0.5 && h < 1.0 {
        Ok(h)
    } else {
        Err(format!("hurst must lie in (0.5, 1), got {h}"))
    }
}

fn parse_g(s: &str) -> Result<Subordination, String> {
    s.parse().map_err(|e: wsep::Error| e.to_string())
}

fn parse_nonneg(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number >= 0, got `{s}`")),
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number > 0, got `{s}`")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Covariance model: fgn, white or explicit:<file> (one lag per line from lag 0).
    #[arg(long)]
    pub model: Option<String>,
    /// Hurst index of fractional Gaussian noise, in (0.5, 1).
    #[arg(long, value_parser = parse_hurst)]
    pub hurst: Option<f64>,
    /// Subordination G: identity, square, cube or hermite:c0,c1,...
    #[arg(long, value_parser = parse_g)]
    pub g: Option<Subordination>,
}

#[derive(Debug, Clone, Args)]
pub struct WeightArgs {
    /// Moment exponent delta (E|Y|^delta < inf); lambda defaults to delta / 3.
    #[arg(long, value_parser = parse_positive)]
    pub delta: Option<f64>,
    /// Experimental override of the weight exponent lambda (e.g. delta / 2).
    #[arg(long, value_parser = parse_nonneg)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub weight: WeightArgs,
    /// Path length N.
    #[arg(long, default_value_t = 1024, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "wsep-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CoefficientArgs {
    /// Subordination G: identity, square, cube or hermite:c0,c1,...
    #[arg(long, value_parser = parse_g, default_value = "identity")]
    pub g: Subordination,
    /// Largest order q tabulated.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..=60))]
    pub q: u64,
    /// Evaluation point (repeatable); defaults to the grid [-8, 8] with step 0.05.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Vec<f64>,
    #[command(flatten)]
    pub weight: WeightArgs,
    #[arg(long, default_value = "wsep-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML configuration (see `wsep config --print-defaults`); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub weight: WeightArgs,
    /// Replications per length.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated increasing lengths, e.g. 256,512,1024.
    #[arg(long, value_delimiter = ',')]
    pub n_ladder: Option<Vec<usize>>,
    /// Comma-separated tail levels for P(M_N > eps).
    #[arg(long, value_delimiter = ',')]
    pub epsilon: Option<Vec<f64>>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "wsep-out")]
    pub out: PathBuf,
    /// Also write one CSV row per replication.
    #[arg(long)]
    pub keep_raw: bool,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    /// Subordination G: identity, square, cube or hermite:c0,c1,...
    #[arg(long, value_parser = parse_g, default_value = "identity")]
    pub g: Subordination,
    #[command(flatten)]
    pub weight: WeightArgs,
    /// Deepest level k.
    #[arg(long, default_value_t = 8)]
    pub kmax: u32,
    /// Node budget per level.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(2..))]
    pub imax: u64,
    #[arg(long, default_value = "wsep-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Print the default experiment configuration as TOML.
    #[arg(long)]
    pub print_defaults: bool,
}
