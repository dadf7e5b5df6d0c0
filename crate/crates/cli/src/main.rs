mod commands;
mod manifest;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Spectral regularization of noisy matrices with unbiased degrees of freedom and SURE.
#[derive(Parser, Debug)]
#[command(name = "lowrank-df", version)]
pub struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit one estimator to a CSV matrix and report df and SURE.
    Fit(FitArgs),
    /// Sweep theta for one penalty family and write (theta, df, sure) rows.
    SurePath(SurePathArgs),
    /// Run a preset or a config file and write one CSV per penalty.
    Experiment(ExperimentArgs),
    /// Run the self-validation suites.
    Validate(ValidateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
pub struct PenaltyArgs {
    /// nuclear, scad, mcplus, log, firm, bridge or rank.
    #[arg(long)]
    pub penalty: Option<String>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct DensityArgs {
    /// Bootstrap replicates for the singular value densities of bridge and rank fits.
    #[arg(long, default_value_t = 1000)]
    pub density_reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Dense CSV matrix.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Reduced rank fit of rank K instead of a penalty.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub tau: f64,
    #[command(flatten)]
    pub density: DensityArgs,
    /// Fitted matrix CSV; the summary goes to `<stem>.summary.csv`.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SurePathArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    /// Comma-separated theta values.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["theta_from", "theta_to", "theta_count"])]
    pub theta: Vec<f64>,
    #[arg(long, requires_all = ["theta_to", "theta_count"])]
    pub theta_from: Option<f64>,
    #[arg(long)]
    pub theta_to: Option<f64>,
    #[arg(long)]
    pub theta_count: Option<usize>,
    #[arg(long)]
    pub tau: f64,
    #[command(flatten)]
    pub density: DensityArgs,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Preset name (figure1 .. figure5) or path to a config file.
    pub source: String,
    /// Override the truth replicate count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the estimate replicate count.
    #[arg(long)]
    pub estimate_reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Quick,
    Default,
    Full,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long, value_enum, default_value_t = Scale::Default)]
    pub scale: Scale,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write to this path instead of the recorded one.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli, &argv[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
