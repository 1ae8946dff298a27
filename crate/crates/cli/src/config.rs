//! Run configuration: JSON file, validation and seed derivation.
//!
//! Every field has a default, so `{}` is a valid (if path-less) config. Stage
//! seeds are derived from the top-level `seed` at resolution time; the
//! resolved config is what gets hashed and written to manifests.

use std::path::{Path, PathBuf};

use ebmddg::ddg::{DdgConfig, DdgHead, TrainConfig, UnboundConvention};
use ebmddg::dsm::DsmConfig;
use ebmddg::energy::EnergyConfig;
use ebmddg::rng::derive_seed;
use ebmddg::sampler::LangevinConfig;
use ebmddg::seqmodel::ToyConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding `{pdb_id}.pdb` files.
    pub structures_dir: Option<PathBuf>,
    /// Labeled mutation table.
    pub skempi_csv: Option<PathBuf>,
    /// Unlabeled table scored by `rank`.
    pub candidates_csv: Option<PathBuf>,
    /// Precomputed conditionals; without one a toy provider is trained.
    pub logprob_file: Option<PathBuf>,
    /// Frozen sampling model; defaults to the run's `pretrain` output.
    pub reference_checkpoint: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldSettings {
    pub n_folds: usize,
    /// Fraction of training-fold complexes held out for validation.
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for FoldSettings {
    fn default() -> Self {
        Self { n_folds: 3, val_frac: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSettings {
    /// Random fixtures for the coordinate check.
    pub fixtures: usize,
    /// Fixtures for the (more expensive) parameter checks.
    pub param_fixtures: usize,
    pub h: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        Self { fixtures: 20, param_fixtures: 2, h: 1e-5, tol: 1e-5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    /// Master seed; stage seeds are derived from it.
    pub seed: u64,
    pub energy: EnergyConfig,
    pub dsm: DsmConfig,
    pub langevin: LangevinConfig,
    pub unbound: UnboundConvention,
    /// Decoding-order seed (derived).
    pub order_seed: u64,
    /// Initial head values.
    pub head: DdgHead,
    pub training: TrainConfig,
    pub toy: ToyConfig,
    pub folds: FoldSettings,
    pub gradcheck: GradcheckSettings,
    /// Langevin step counts visited by `sweep`.
    pub sweep_steps: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths { output_dir: PathBuf::from("out"), ..Default::default() },
            seed: 0,
            energy: EnergyConfig::default(),
            dsm: DsmConfig::default(),
            langevin: LangevinConfig::default(),
            unbound: UnboundConvention::default(),
            order_seed: 0,
            head: DdgHead::default(),
            training: TrainConfig::default(),
            toy: ToyConfig::default(),
            folds: FoldSettings::default(),
            gradcheck: GradcheckSettings::default(),
            sweep_steps: vec![1, 5, 10, 100],
        }
    }
}

/// Seed tags, in manifest order.
pub const SEED_TAGS: [(&str, u64); 7] =
    [("energy_init", 1), ("dsm", 2), ("langevin", 3), ("decoding_order", 4), ("toy", 5), ("training", 6), ("folds", 7)];

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(vec![format!("config: {e}")]))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(vec![format!("config: cannot read {}: {e}", path.display())]))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.rebase(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Resolves relative input paths against `base`.
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.paths.structures_dir);
        fix(&mut self.paths.skempi_csv);
        fix(&mut self.paths.candidates_csv);
        fix(&mut self.paths.logprob_file);
        fix(&mut self.paths.reference_checkpoint);
    }

    pub fn seed_of(&self, tag: &str) -> u64 {
        let t = SEED_TAGS.iter().find(|(n, _)| *n == tag).expect("known seed tag").1;
        derive_seed(self.seed, t)
    }

    /// Copies derived seeds into the stage configs.
    pub fn resolve_seeds(&mut self) {
        self.dsm.seed = self.seed_of("dsm");
        self.langevin.seed = self.seed_of("langevin");
        self.order_seed = self.seed_of("decoding_order");
        self.toy.seed = self.seed_of("toy");
        self.training.seed = self.seed_of("training");
        self.folds.seed = self.seed_of("folds");
        self.gradcheck.seed = self.seed_of("energy_init");
    }

    pub fn seeds(&self) -> Vec<(String, u64)> {
        let mut out = vec![("seed".to_string(), self.seed)];
        out.extend(SEED_TAGS.iter().map(|(n, _)| (n.to_string(), self.seed_of(n))));
        out
    }

    /// First 16 hex digits of the SHA-256 of the config, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))[..16].to_string()
    }

    pub fn ddg_config(&self) -> DdgConfig {
        DdgConfig { langevin: self.langevin, unbound: self.unbound, order_seed: self.order_seed }
    }

    /// Every invalid field; empty when the config is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                p.push(msg);
            }
        };
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;

        for (name, path, dir) in [
            ("paths.structures_dir", &self.paths.structures_dir, true),
            ("paths.skempi_csv", &self.paths.skempi_csv, false),
            ("paths.candidates_csv", &self.paths.candidates_csv, false),
            ("paths.logprob_file", &self.paths.logprob_file, false),
            ("paths.reference_checkpoint", &self.paths.reference_checkpoint, false),
        ] {
            if let Some(path) = path {
                let ok = if dir { path.is_dir() } else { path.is_file() };
                need(ok, format!("{name}: {} does not exist", path.display()));
            }
        }

        let e = &self.energy;
        need(e.d_embed > 0, "energy.d_embed: must be positive".into());
        need(e.hidden > 0, "energy.hidden: must be positive".into());
        need(e.n_rbf > 0, "energy.n_rbf: must be positive".into());
        need(finite_pos(e.rbf_max), "energy.rbf_max: must be positive".into());

        let d = &self.dsm;
        need(finite_pos(d.sigma), "dsm.sigma: must be positive".into());
        need(finite_pos(d.lr), "dsm.lr: must be positive".into());
        need(d.k > 0, "dsm.k: must be positive".into());
        need(d.batch_size > 0, "dsm.batch_size: must be positive".into());

        let l = &self.langevin;
        need(finite_nonneg(l.alpha0), "langevin.alpha0: must be non-negative".into());
        need(finite_nonneg(l.eta0), "langevin.eta0: must be non-negative".into());
        need(finite_pos(l.sigma2_prior), "langevin.sigma2_prior: must be positive".into());
        need(l.k > 0, "langevin.k: must be positive".into());

        let h = &self.head;
        need(h.log_kbt.is_finite(), "head.log_kbt: must be finite".into());
        need(h.s.is_finite(), "head.s: must be finite".into());
        need(h.b.is_finite(), "head.b: must be finite".into());
        need(finite_nonneg(h.beta_kl), "head.beta_kl: must be non-negative".into());

        let t = &self.training;
        need(finite_pos(t.lr), "training.lr: must be positive".into());
        need(t.batch_size > 0, "training.batch_size: must be positive".into());
        need(t.patience > 0, "training.patience: must be positive".into());

        let y = &self.toy;
        need(y.n_rbf > 0, "toy.n_rbf: must be positive".into());
        need(finite_pos(y.rbf_max), "toy.rbf_max: must be positive".into());
        need(y.k > 0, "toy.k: must be positive".into());
        need(y.hidden > 0, "toy.hidden: must be positive".into());
        need(finite_pos(y.lr), "toy.lr: must be positive".into());
        need(y.batch_size > 0, "toy.batch_size: must be positive".into());
        need((0.0..1.0).contains(&y.mask_frac), "toy.mask_frac: must lie in [0, 1)".into());
        need(finite_pos(y.init_scale), "toy.init_scale: must be positive".into());

        let f = &self.folds;
        need(f.n_folds >= 2, "folds.n_folds: need at least 2".into());
        need(f.val_frac > 0.0 && f.val_frac < 1.0, "folds.val_frac: must lie in (0, 1)".into());

        let g = &self.gradcheck;
        need(g.fixtures > 0, "gradcheck.fixtures: must be positive".into());
        need(finite_pos(g.h), "gradcheck.h: must be positive".into());
        need(finite_pos(g.tol), "gradcheck.tol: must be positive".into());

        need(!self.sweep_steps.is_empty(), "sweep_steps: must not be empty".into());
        p
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(p))
        }
    }

    pub fn require_structures(&self) -> Result<(&Path, &Path), CliError> {
        let mut missing = Vec::new();
        if self.paths.structures_dir.is_none() {
            missing.push("paths.structures_dir: required by this command".to_string());
        }
        if self.paths.skempi_csv.is_none() {
            missing.push("paths.skempi_csv: required by this command".to_string());
        }
        match (&self.paths.structures_dir, &self.paths.skempi_csv) {
            (Some(s), Some(k)) => Ok((s, k)),
            _ => Err(CliError::Config(missing)),
        }
    }
}
