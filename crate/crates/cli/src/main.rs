//! `dpbin`: binned square-root factorizations for private continual counting.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;

/// Environment variable naming the directory that relative `--out` paths and
/// default output files are placed in.
pub const OUT_DIR_ENV: &str = "DPBIN_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "dpbin", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print Toeplitz coefficients of the counting matrix, its square root or
    /// its inverse square root.
    Coeffs(CoeffsArgs),
    /// Bin the square-root factorization and report its exact error.
    Factorize(FactorizeArgs),
    /// Evaluate a grid of binning parameters (c = 1 - 1/d, tau = 1/n).
    Sweep(SweepArgs),
    /// Run the private counter over an input stream.
    Stream(StreamArgs),
    /// Run invariant suites.
    Verify(VerifyArgs),
}

/// The matrix `A` with subdiagonals `a_k = Σ α^{k-i} β^i`.
#[derive(Debug, Clone, Copy, Args)]
struct SpecArgs {
    /// Matrix dimension.
    #[arg(long)]
    n: usize,
    /// Decay applied to past inputs; `1` is plain prefix summation.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Momentum; must satisfy `0 <= beta < alpha`.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CoeffKind {
    /// Counting matrix.
    A,
    /// Square root.
    B,
    /// Inverse square root.
    S,
}

#[derive(Debug, Args)]
struct CoeffsArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_enum, default_value_t = CoeffKind::B)]
    kind: CoeffKind,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("binning").required(true).args(["c", "xi"])))]
struct FactorizeArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Merge threshold in (0, 1).
    #[arg(long, requires = "tau")]
    c: Option<f64>,
    /// Truncation threshold in (0, 1).
    #[arg(long, requires = "c")]
    tau: Option<f64>,
    /// Target error blow-up; derives c and tau with a guaranteed ratio <= 1 + xi.
    #[arg(long, conflicts_with_all = ["c", "tau"])]
    xi: Option<f64>,
    /// Use power iteration for the condition number instead of the analytic bound.
    #[arg(long, requires = "xi")]
    exact_kappa: bool,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format; inferred from the `--out` extension when omitted.
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
    /// Also write the per-row partitions ("a1-b1,a2-b2,...") to this file.
    #[arg(long)]
    dump_binning: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = 2.0)]
    d_min: f64,
    #[arg(long, default_value_t = 64.0)]
    d_max: f64,
    #[arg(long, default_value_t = 8)]
    d_steps: usize,
    /// Space the d grid geometrically instead of linearly.
    #[arg(long)]
    log_spacing: bool,
    /// Add binary-mechanism and identity rows for each n.
    #[arg(long)]
    baseline: bool,
    /// Write 0 for wall_time_ms so the output is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StreamArgs {
    /// One value in [0, 1] per line (first CSV column); a non-numeric first
    /// line is treated as a header.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long)]
    c: f64,
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Testing hook: run with zero sensitivity, so the output is noiseless.
    #[arg(long)]
    zero_noise: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    Kernels,
    Binning,
    Perturbation,
    Streaming,
    All,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    suite: SuiteArg,
    /// Print the reference binning (n=50, c=0.75, tau=0.02) row by row.
    #[arg(long)]
    dump_binning: bool,
    /// Flip the merge comparison to inclusive; the binning suite must fail.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Coeffs(args) => commands::coeffs(&args),
        Command::Factorize(args) => commands::factorize(&args),
        Command::Sweep(args) => commands::sweep(&args),
        Command::Stream(args) => commands::stream(&args),
        Command::Verify(args) => commands::verify(&args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            commands::exit_code_for(&err)
        }
    }
}
