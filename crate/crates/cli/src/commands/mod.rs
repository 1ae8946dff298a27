//! Command implementations. Each command publishes one output directory under
//! the run root and returns its path.

mod evaluate;
mod gradcheck;
mod predict;
mod prepare;
mod sample;
mod train;

use std::path::{Path, PathBuf};

use ebmddg::ddg::DdgConfig;
use ebmddg::energy::EnergyModel;
use ebmddg::rng::{derive_seed, seeded};
use ebmddg::sampler::LangevinConfig;
use ebmddg::seqmodel::PrecomputedLogProbs;

pub use evaluate::{evaluate, read_predictions, PredictionRow};
pub use gradcheck::{gradcheck, run_checks, CheckResult, GradcheckReport};
pub use predict::{predict, rank, sweep, MetricsVsT, METRICS_VS_T};
pub use prepare::{ingest, pretrain};
pub use sample::sample;
pub use train::train;

use crate::config::RunConfig;
use crate::data::{load_dataset, Dataset};
use crate::error::CliError;
use crate::models::load_energy;
use crate::run::{run_root, InputFile, Manifest, Overrides};

/// Resolved configuration plus command-line overrides.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub overrides: Overrides,
    pub root: PathBuf,
}

impl Context {
    /// Resolves seeds and validates; `config` should already carry hashed overrides.
    pub fn new(mut config: RunConfig, overrides: Overrides) -> Result<Self, CliError> {
        config.resolve_seeds();
        let mut problems = config.problems();
        if let Some(f) = overrides.fold {
            if f >= config.folds.n_folds {
                problems.push(format!("--fold: {f} is out of range for {} folds", config.folds.n_folds));
            }
        }
        if !problems.is_empty() {
            return Err(CliError::Config(problems));
        }
        let root = run_root(&config);
        Ok(Self { config, overrides, root })
    }

    /// Langevin settings after the `--steps` override.
    pub fn langevin(&self) -> LangevinConfig {
        let mut l = self.config.langevin;
        if let Some(t) = self.overrides.steps {
            l.steps = t;
        }
        l
    }

    /// Effective Langevin step count.
    pub fn steps(&self) -> usize {
        self.langevin().steps
    }

    /// Prediction settings for the record at table row `row`; sampling noise
    /// and decoding order are seeded per record.
    pub fn record_config(&self, row: usize) -> DdgConfig {
        let mut c = self.config.ddg_config();
        c.langevin = self.langevin();
        c.langevin.seed = derive_seed(c.langevin.seed, row as u64);
        c.order_seed = derive_seed(c.order_seed, row as u64);
        c
    }

    /// Output directory name, suffixed with the step count under `--steps`.
    pub fn leaf(&self, name: &str) -> PathBuf {
        match self.overrides.steps {
            Some(t) => self.root.join(format!("{name}-T{t}")),
            None => self.root.join(name),
        }
    }

    pub fn manifest(&self, command: &str) -> Manifest {
        Manifest::new(command, &self.config, &self.overrides)
    }

    pub fn dataset(&self) -> Result<Dataset, CliError> {
        let (structures, table) = self.config.require_structures()?;
        load_dataset(structures, table, self.config.langevin.k)
    }

    /// Hashes of the dataset inputs for manifests.
    pub fn dataset_inputs(&self, ds: &Dataset) -> Result<Vec<InputFile>, CliError> {
        let mut out = Vec::new();
        if let Some(t) = &self.config.paths.skempi_csv {
            out.push(InputFile::hash(t)?);
        }
        for f in &ds.structure_files {
            out.push(InputFile::hash(f)?);
        }
        Ok(out)
    }

    pub fn logprobs(&self) -> Result<Option<(PrecomputedLogProbs, InputFile)>, CliError> {
        match &self.config.paths.logprob_file {
            None => Ok(None),
            Some(p) => {
                let table = PrecomputedLogProbs::from_path(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
                Ok(Some((table, InputFile::hash(p)?)))
            }
        }
    }

    /// The frozen sampling model: configured checkpoint, then this run's
    /// pretraining output, then a seeded fresh initialization.
    pub fn reference(&self) -> Result<(EnergyModel<f64>, String), CliError> {
        if let Some(p) = &self.config.paths.reference_checkpoint {
            return Ok((load_energy(p)?, p.display().to_string()));
        }
        let pretrained = self.root.join("pretrain").join("energy.ckpt");
        if pretrained.is_file() {
            return Ok((load_energy(&pretrained)?, pretrained.display().to_string()));
        }
        log::warn!("no pretrained energy model found; sampling with a fresh initialization");
        Ok((self.fresh_energy(), "fresh initialization".into()))
    }

    pub fn fresh_energy(&self) -> EnergyModel<f64> {
        EnergyModel::init(self.config.energy, &mut seeded(self.config.seed_of("energy_init")))
    }

    /// Trained folds: the `--fold` override, else every fold with training output.
    pub fn trained_folds(&self) -> Result<Vec<usize>, CliError> {
        let folds: Vec<usize> = match self.overrides.fold {
            Some(f) => vec![f],
            None => (0..self.config.folds.n_folds).filter(|f| self.fold_dir(*f).is_dir()).collect(),
        };
        for f in &folds {
            if !self.fold_dir(*f).is_dir() {
                return Err(CliError::input(format!("{} is missing; run train first", self.fold_dir(*f).display())));
            }
        }
        if folds.is_empty() {
            return Err(CliError::input(format!("no trained folds under {}; run train first", self.root.display())));
        }
        Ok(folds)
    }

    pub fn fold_dir(&self, fold: usize) -> PathBuf {
        self.root.join("train").join(format!("fold-{fold}"))
    }
}

/// Display helper for paths in log lines.
pub fn show(p: &Path) -> String {
    p.display().to_string()
}
