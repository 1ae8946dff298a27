//! Argument parsing and command dispatch.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, Context};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::fixture::{write_fixture, FixtureSpec};
use crate::run::Overrides;

#[derive(Debug, Parser)]
#[command(name = "ebmddg", version, about = "Energy-based binding ΔΔG prediction pipeline")]
pub struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Restrict train/predict/rank to one fold.
    #[arg(long, global = true)]
    pub fold: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Langevin step count T for predict, rank, sample and evaluate.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Precomputed log-probability CSV (overrides the config).
    #[arg(long = "logprob-file", global = true)]
    pub logprob_file: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the mutation table and structures; write a dataset summary and fold plan.
    Ingest,
    /// Pretrain the energy model by denoising score matching.
    Pretrain,
    /// Train the ΔΔG head, energy model and (toy) provider per fold.
    Train,
    /// Predict held-out records of each trained fold.
    Predict,
    /// Score and rank a candidate table.
    Rank,
    /// Compute metrics for a predictions file.
    Evaluate {
        /// Predictions CSV; defaults to this run's predict output.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck,
    /// Sample mutant coordinates for one record.
    Sample {
        /// 1-based data row of the mutation table.
        #[arg(long)]
        record: Option<usize>,
    },
    /// Predict once per configured Langevin step count.
    Sweep,
    /// Write a synthetic fixture set (structures, tables, log-probabilities, config).
    Fixture {
        /// Destination directory.
        dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        complexes: usize,
    },
}

impl Cli {
    /// Config after the hashed overrides (seed, log-prob file, output directory).
    pub fn config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.logprob_file {
            cfg.paths.logprob_file = Some(p.clone());
        }
        if let Some(o) = &self.out {
            cfg.paths.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

/// Runs one invocation and returns the published output directory.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    if let Command::Fixture { dir, complexes } = &cli.command {
        let spec = FixtureSpec { n_complexes: *complexes, seed: cli.seed.unwrap_or(0), ..Default::default() };
        return Ok(write_fixture(dir, &spec)?.root);
    }
    let ctx = Context::new(cli.config()?, Overrides { steps: cli.steps, fold: cli.fold })?;
    match &cli.command {
        Command::Ingest => commands::ingest(&ctx),
        Command::Pretrain => commands::pretrain(&ctx),
        Command::Train => commands::train(&ctx),
        Command::Predict => commands::predict(&ctx),
        Command::Rank => commands::rank(&ctx),
        Command::Evaluate { predictions } => commands::evaluate(&ctx, predictions.as_deref()),
        Command::Gradcheck => commands::gradcheck(&ctx),
        Command::Sample { record } => commands::sample(&ctx, *record),
        Command::Sweep => commands::sweep(&ctx),
        Command::Fixture { .. } => unreachable!("handled above"),
    }
}
