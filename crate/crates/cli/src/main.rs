mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "catgrad", version, about = "Straight-Through gradient estimators: training, analysis, verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command that builds a run configuration.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// key = value file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use procedural images instead of IDX files (bars or blobs)
    #[arg(long, num_args = 0..=1, default_missing_value = "bars")]
    pub synth: Option<String>,
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Extra config overrides, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a discrete VAE, writing metrics and checkpoints
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Continue from this checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Record wall-clock milliseconds (makes the CSV non-reproducible)
        #[arg(long)]
        wall_clock: bool,
    },
    /// Evaluate a checkpoint on one split
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Bias and variance of estimators over a run's checkpoints
    Analyze {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run directory produced by `train`
        #[arg(long)]
        run: PathBuf,
        /// bias-variance, spread, or a comma list like `st,reinmax:tau=1.3,reinmax-cv:tau=0.1:eta=1.5`
        #[arg(long, default_value = "bias-variance")]
        estimators: String,
        /// Replicates per estimator
        #[arg(long, default_value_t = 1024)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output CSV (default: <run>/analysis.csv)
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train ReinMax-RK2 over a grid of beta values
    SweepBeta {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `start:stop:step` or a comma list
        #[arg(long, default_value = "-0.2:1.2:0.05", allow_hyphen_values = true)]
        grid: String,
        /// Comma list of seeds (default: the configured seed)
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check the expectation identities by enumeration
    Verify {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 2)]
        n_min: usize,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma list of beta values
        #[arg(long, allow_hyphen_values = true)]
        betas: Option<String>,
        /// as_printed or centered
        #[arg(long, default_value = "as_printed")]
        rk2_form: String,
        /// Corrupt one ReinMax coefficient; the run must then fail
        #[arg(long)]
        mutate: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { cfg, resume, wall_clock } => commands::train(&cfg, resume.as_deref(), wall_clock),
        Command::Eval { cfg, checkpoint, split } => commands::eval(&cfg, &checkpoint, &split),
        Command::Analyze { cfg, run, estimators, m, jobs, csv } => {
            commands::analyze(&cfg, &run, &estimators, m, jobs, csv.as_deref())
        }
        Command::SweepBeta { cfg, grid, seeds, jobs } => commands::sweep_beta(&cfg, &grid, seeds.as_deref(), jobs),
        Command::Verify { trials, n_min, n_max, tol, seed, betas, rk2_form, mutate } => {
            commands::verify(trials, n_min, n_max, tol, seed, betas.as_deref(), &rk2_form, mutate)
        }
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
