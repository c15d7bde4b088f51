mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

/// Radon-CDT nearest-subspace classification with out-of-class rejection.
#[derive(Parser)]
#[command(name = "rcdt-ood", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Confidence level(s), comma separated or repeated. 0 disables rejection.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (PGM images and train/test manifests).
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a model and write it with a training summary.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training manifest (`path,label` CSV).
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Classify individual PGM images.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        /// PGM images to classify.
        inputs: Vec<PathBuf>,
    },
    /// Evaluate a model on a labeled test set at each alpha.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Test manifest (`path,label` CSV).
        #[arg(long)]
        test: Option<PathBuf>,
    },
}

/// Failure classes mapped to exit codes 2 and 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl From<rcdt_ood::Error> for CliError {
    fn from(e: rcdt_ood::Error) -> Self {
        if e.is_input_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        config.seed = common.seed;
    }
    if !common.alpha.is_empty() {
        config.alphas = Some(common.alpha.clone());
    }
    if common.out.is_some() {
        config.out = common.out.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    match cli.command {
        Command::Gen { common } => commands::gen(&load_config(&common)?),
        Command::Train { common, train } => commands::train_cmd(&load_config(&common)?, train),
        Command::Predict {
            common,
            model,
            inputs,
        } => commands::predict(&load_config(&common)?, model, &inputs),
        Command::Eval {
            common,
            model,
            test,
        } => commands::eval(&load_config(&common)?, model, test),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(CliError::Config(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
    }
}
