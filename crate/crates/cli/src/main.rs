//! `l2e`: fit, simulate and benchmark L2E robust regression from the shell.
//!
//! Exit codes: 0 success, 2 input error, 3 solver error.

mod commands;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "l2e",
    version,
    about = "Robust structured regression under the L2E criterion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one dataset and write a JSON report plus per-case weights.
    Fit(FitArgs),
    /// Run simulation replicates and report accuracy.
    Simulate(SimArgs),
    /// Run simulation replicates and report iteration counts and wall time.
    Bench(SimArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyKind {
    None,
    Lasso,
    Mcp,
    /// Nondecreasing coefficients (identity design gives isotonic regression).
    Isotonic,
    /// Nonincreasing coefficients.
    Antitonic,
    /// Distance to the k-sparse set.
    Sparse,
    /// Distance to at most k nonzero successive differences.
    Fused,
    /// Distance to nonnegative second differences.
    Convex,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Name of the response column; all other columns are predictors.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Prepend a column of ones to the design.
    #[arg(long)]
    pub add_intercept: bool,
    #[arg(long, value_enum, default_value_t = PenaltyKind::None)]
    pub penalty: PenaltyKind,
    /// Lasso/MCP level; defaults to 0.1 of the smallest level that zeroes every coefficient.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// MCP concavity.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Sparsity level for the sparse and fused penalties.
    #[arg(long)]
    pub k: Option<usize>,
    /// Final distance-penalty weight.
    #[arg(long, default_value_t = 1e8)]
    pub rho: f64,
    /// Relative objective change that ends the outer loop.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// CSV of case, residual, weight, log_weight.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// isotonic or sparse; may come from --config instead.
    pub scenario: Option<String>,
    /// TOML file of experiment keys; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of contaminated cases.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub shift: Option<f64>,
    /// Noise precision (sparse scenario).
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated: mm, pg, ls, lasso, mcp, distance.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Select tuning parameters by cross-validation.
    #[arg(long)]
    pub cv: bool,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Per-replicate CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Aggregate JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Drop wall times from the outputs.
    #[arg(long)]
    pub omit_timing: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(args) => commands::fit(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Bench(args) => commands::bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("l2e: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
