use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "nnd", version, about = "Sample, fit and check nuclear norm distribution models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the run manifest here instead of printing it to stdout.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Record wall-clock time in the manifest (makes re-runs differ).
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw from NND(lambda) with an MCMC kernel.
    SamplePrior(SamplePriorArgs),
    /// Posterior sampling for Y = X + E.
    Denoise(DenoiseArgs),
    /// Posterior sampling with entries of Y hidden by a 0/1 mask.
    Complete(CompleteArgs),
    /// Fixed-lambda runs over a logarithmic grid, optionally against the adaptive run.
    GridDenoise(GridArgs),
    /// Moment estimate lambda = nm / mean nuclear norm over a set of matrices.
    FitLambda(FitLambdaArgs),
    /// Distribution-law battery; exit code 0 iff every check passes.
    Validate(ValidateArgs),
    /// Spectral comparison of NND(1) against the normal product NP(4/3).
    CompareNp(CompareNpArgs),
    /// Effective sample size of one trace column.
    Ess(EssArgs),
    /// Write a seeded synthetic low-rank problem (truth, noisy Y, optional mask).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Prox,
    Svd,
}

impl From<KernelArg> for nnd::samplers::Kernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Prox => nnd::samplers::Kernel::Prox,
            KernelArg::Svd => nnd::samplers::Kernel::SvdGibbs,
        }
    }
}

/// `adaptive` or a fixed non-negative value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaArg {
    Adaptive,
    Fixed(f64),
}

impl FromStr for LambdaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("adaptive") {
            return Ok(LambdaArg::Adaptive);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(LambdaArg::Fixed(v)),
            _ => Err(format!("expected 'adaptive' or a non-negative number, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep adapting step sizes after burn-in.
    #[arg(long)]
    pub adapt_always: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SamplePriorArgs {
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = KernelArg::Prox)]
    pub kernel: KernelArg,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long)]
    pub out_draws: Option<PathBuf>,
    /// Treat --out-draws as a directory and write one CSV per draw.
    #[arg(long)]
    pub per_draw_files: bool,
    #[arg(long)]
    pub out_trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PosteriorOutArgs {
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out_mean: Option<PathBuf>,
    #[arg(long)]
    pub out_trace: Option<PathBuf>,
    #[arg(long)]
    pub out_draws: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Noise variance (the initial value when --sample-gamma2 is set).
    #[arg(long)]
    pub gamma2: f64,
    #[arg(long)]
    pub sample_gamma2: bool,
    #[arg(long, default_value = "adaptive")]
    pub lambda: LambdaArg,
    #[arg(long, value_enum, default_value_t = KernelArg::Prox)]
    pub kernel: KernelArg,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub out: PosteriorOutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompleteArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub gamma2: f64,
    #[arg(long)]
    pub sample_gamma2: bool,
    #[arg(long, default_value = "adaptive")]
    pub lambda: LambdaArg,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub out: PosteriorOutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Score as completion with this mask (hidden-entry MSE is the criterion).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub gamma2: f64,
    #[arg(long, default_value_t = 0.01)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = 100.0)]
    pub grid_hi: f64,
    #[arg(long, default_value_t = 10)]
    pub grid_n: usize,
    /// Also run the adaptive-lambda chain and report its MSE ratio to the grid minimum.
    #[arg(long)]
    pub adaptive: bool,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long)]
    pub out_table: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitLambdaArgs {
    /// Matrix files or glob patterns (CSV or PGM).
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 2)]
    pub rows: usize,
    #[arg(long, default_value_t = 2)]
    pub cols: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 2_000)]
    pub n_draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Significance level of every check.
    #[arg(long, default_value_t = 0.01)]
    pub level: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareNpArgs {
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 20_000)]
    pub n_draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Iterations between retained NND draws.
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    /// Compare the NND sample with itself.
    #[arg(long = "self")]
    pub self_compare: bool,
    /// Directory for the report and histogram CSVs.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EssArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value = "nuclear_norm")]
    pub column: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sd: f64,
    /// Hide each entry with this probability and write mask.csv.
    #[arg(long)]
    pub p_hidden: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}
