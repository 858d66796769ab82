//! The `volsample` command-line front end.

pub mod commands;
pub mod dataset;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::sampling::Algorithm;
pub use dataset::{parse_dataset, Dataset, Format};
pub use report::RunReport;

#[derive(Debug, Parser)]
#[command(name = "volsample", version, about = "Volume sampling for subsampled linear regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw one subset and print its sorted row indices.
    Sample(SampleArgs),
    /// Fit subsampled (ridge) estimators over replicate subsets.
    Regress(RegressArgs),
    /// Check identities, sampler laws or regression bounds against exact oracles.
    Verify(VerifyArgs),
    /// Time samplers over a grid of row counts.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Regvol,
    Fastregvol,
    Leverage,
    /// Exact enumeration of the subset law (small inputs only).
    Oracle,
}

impl AlgorithmArg {
    pub fn sampler(self) -> Option<Algorithm> {
        match self {
            AlgorithmArg::Regvol => Some(Algorithm::RegVol),
            AlgorithmArg::Fastregvol => Some(Algorithm::FastRegVol),
            AlgorithmArg::Leverage => Some(Algorithm::LeverageIid),
            AlgorithmArg::Oracle => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self.sampler() {
            Some(a) => a.name(),
            None => "oracle",
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Column count for LibSVM input (default: largest index present).
    #[arg(long)]
    pub features: Option<usize>,
}

#[derive(Clone, Debug, Args)]
pub struct OutputArgs {
    #[arg(long, env = "VOLSAMPLE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON run report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Include wall-clock timings in the report (breaks byte-for-byte reproducibility).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Clone, Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value = "regvol")]
    pub algorithm: AlgorithmArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args)]
pub struct RegressArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Sweep these ridge values instead of `--lambda`.
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    /// One or more algorithms, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "regvol")]
    pub algorithm: Vec<AlgorithmArg>,
    #[arg(long, default_value_t = 100)]
    pub replicates: u64,
    /// Report the loss of the averaged estimator instead of the mean loss.
    #[arg(long)]
    pub average: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Identities,
    Distribution,
    RegressionBounds,
}

#[derive(Clone, Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Draws per configuration for the distribution suite.
    #[arg(long, default_value_t = 100_000)]
    pub draws: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_value = "regvol,fastregvol")]
    pub algorithm: Vec<AlgorithmArg>,
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    /// Subset size (default: d).
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long, env = "VOLSAMPLE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported as JSON on standard error.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.render().to_string();
            eprintln!("{}", report::error_json(&crate::Error::InvalidConfig(msg.trim().to_string())));
            return 2;
        }
    };
    let echo: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::run(&cli.command, echo) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", report::error_json(&e));
            2
        }
    }
}
