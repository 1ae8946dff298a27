//! Synthetic fixture sets: PDB files, a labeled table, a candidate table, a
//! precomputed log-probability file and a matching config.
//!
//! Labels come from a seeded teacher (random energy model, random toy
//! provider, fixed head), so a correctly wired pipeline has signal to fit.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ebmddg::ddg::{predict, DdgConfig, DdgHead};
use ebmddg::energy::{EnergyConfig, EnergyModel};
use ebmddg::ingest::{write_backbone_pdb, Complex, Group};
use ebmddg::rng::{derive_seed, seeded};
use ebmddg::sampler::LangevinConfig;
use ebmddg::seqmodel::{PrecomputedLogProbs, ToyConfig, ToyProvider};
use ebmddg::synthetic::{random_mutations, two_chain_complex};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureSpec {
    pub n_complexes: usize,
    pub residues_per_chain: usize,
    pub records_per_complex: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self { n_complexes: 5, residues_per_chain: 8, records_per_complex: 6, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixturePaths {
    pub root: PathBuf,
    pub structures_dir: PathBuf,
    pub skempi_csv: PathBuf,
    pub candidates_csv: PathBuf,
    pub logprob_file: PathBuf,
    pub config: PathBuf,
}

#[derive(Serialize)]
struct TableRow<'a> {
    pdb_id: &'a str,
    binder_chains: &'a str,
    target_chains: &'a str,
    mutations: String,
    ddg: Option<f64>,
}

/// Small, fast settings matching the fixture's scale.
pub fn fixture_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.energy = EnergyConfig { d_embed: 12, hidden: 24, n_rbf: 8, rbf_max: 16.0 };
    c.dsm.steps = 50;
    c.training.max_steps = 150;
    c.training.max_epochs = 50;
    c.training.lr = 1e-3;
    c.toy = ToyConfig { hidden: 16, steps: 100, n_rbf: 4, k: 8, ..Default::default() };
    c.gradcheck.fixtures = 4;
    c.gradcheck.param_fixtures = 1;
    c
}

/// Per-site conditionals of `toy` with all context visible, for every
/// full-backbone residue in the bound state and in its group's unbound view.
pub fn toy_logprob_table(toy: &ToyProvider, complexes: &[Complex]) -> Result<PrecomputedLogProbs, CliError> {
    let mut table = PrecomputedLogProbs::new();
    let none = BTreeSet::new();
    for c in complexes {
        for (unbound, views) in [(false, vec![c.clone()]), (true, vec![c.group_view(Group::Binder), c.group_view(Group::Target)])] {
            for view in &views {
                for r in view.residues().filter(|r| r.has_full_backbone()) {
                    let f = toy.features(view, &r.id, &none)?;
                    table.insert(&c.pdb_id, unbound, r.id, toy.log_probs_from_features(&f)?)?;
                }
            }
        }
    }
    Ok(table)
}

/// Writes a fixture set under `dir` and returns its paths.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<FixturePaths, CliError> {
    let structures_dir = dir.join("structures");
    fs::create_dir_all(&structures_dir)?;
    let n = spec.residues_per_chain;
    let complexes: Vec<Complex> = (0..spec.n_complexes)
        .map(|i| two_chain_complex(&format!("FX{i:02}"), n, n, 5.5 + 0.25 * (i % 3) as f64, derive_seed(spec.seed, i as u64)))
        .collect();
    for c in &complexes {
        fs::write(structures_dir.join(format!("{}.pdb", c.pdb_id)), write_backbone_pdb(c))?;
    }

    let teacher_toy = ToyProvider::init(ToyConfig { init_scale: 1.0, hidden: 16, n_rbf: 4, k: 8, ..Default::default() }, &mut seeded(spec.seed ^ 11));
    let table = toy_logprob_table(&teacher_toy, &complexes)?;
    let logprob_file = dir.join("logprobs.csv");
    table.write(fs::File::create(&logprob_file)?)?;

    let teacher_energy = EnergyModel::init(EnergyConfig { d_embed: 8, hidden: 16, n_rbf: 8, rbf_max: 16.0 }, &mut seeded(spec.seed ^ 13));
    let head = DdgHead { log_kbt: 0.7f64.ln(), s: 1.5, b: 0.3, beta_kl: 0.0 };
    let mut rng = seeded(spec.seed ^ 17);
    let mut rows = Vec::new();
    for c in &complexes {
        for j in 0..spec.records_per_complex {
            let muts = random_mutations(c, 1 + j % 2, &mut rng);
            let cfg = DdgConfig { langevin: LangevinConfig { seed: derive_seed(spec.seed, rows.len() as u64), ..Default::default() }, ..Default::default() };
            let ddg = predict(c, &muts, &table, &teacher_energy, &teacher_energy, &head, &cfg)?.ddg_hat;
            rows.push(TableRow { pdb_id: &c.pdb_id, binder_chains: "A", target_chains: "B", mutations: muts.to_string(), ddg: Some(ddg) });
        }
    }
    let skempi_csv = dir.join("skempi.csv");
    let mut w = csv::Writer::from_path(&skempi_csv)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;

    // every substitution at the first three binder residues of the first complex
    let c0 = &complexes[0];
    let mut cands = Vec::new();
    for r in c0.chains[0].residues.iter().take(3) {
        for aa in ebmddg::ingest::AminoAcid::all().filter(|a| *a != r.aa) {
            let code = format!("{}{}{}{}", r.aa.letter(), r.id.chain, r.id.seq, aa.letter());
            cands.push(TableRow { pdb_id: &c0.pdb_id, binder_chains: "A", target_chains: "B", mutations: code, ddg: None });
        }
    }
    let candidates_csv = dir.join("candidates.csv");
    let mut w = csv::Writer::from_path(&candidates_csv)?;
    for r in &cands {
        w.serialize(r)?;
    }
    w.flush()?;

    let mut cfg = fixture_config();
    cfg.paths.structures_dir = Some(PathBuf::from("structures"));
    cfg.paths.skempi_csv = Some(PathBuf::from("skempi.csv"));
    cfg.paths.candidates_csv = Some(PathBuf::from("candidates.csv"));
    cfg.paths.output_dir = PathBuf::from("out");
    let config = dir.join("config.json");
    fs::write(&config, serde_json::to_string_pretty(&cfg).map_err(CliError::internal)? + "\n")?;

    Ok(FixturePaths { root: dir.to_path_buf(), structures_dir, skempi_csv, candidates_csv, logprob_file, config })
}
