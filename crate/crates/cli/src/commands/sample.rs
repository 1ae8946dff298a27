use std::path::PathBuf;

use ebmddg::energy::energy_of;
use ebmddg::ingest::{apply_mutation_set, write_backbone_pdb, Point};
use ebmddg::sampler::{langevin_sample, trajectory_csv};
use serde::Serialize;

use super::Context;
use crate::error::CliError;
use crate::run::Stage;

#[derive(Debug, Serialize)]
struct SampleSummary {
    row: usize,
    pdb_id: String,
    mutations: String,
    steps: usize,
    reference: String,
    n_neighbors: usize,
    /// Reference-model energy of the neighborhood before and after sampling.
    energy_initial: Option<f64>,
    energy_final: Option<f64>,
    /// RMS displacement of the mutated residues' atoms.
    site_rmsd: f64,
}

/// Samples mutant coordinates for one table row (default: the first usable
/// record) and writes the mutant backbone plus the full trajectory.
pub fn sample(ctx: &Context, row: Option<usize>) -> Result<PathBuf, CliError> {
    let ds = ctx.dataset()?;
    let entry = match row {
        Some(r) => ds.entry_by_row(r).ok_or_else(|| CliError::input(format!("no usable record at row {r}")))?,
        None => ds.entries.first().ok_or_else(|| CliError::input("the table has no usable records"))?,
    };
    let (reference, source) = ctx.reference()?;
    let cfg = ctx.record_config(entry.row).langevin;
    let rec = &entry.record;
    let sampled = langevin_sample(&rec.complex, &rec.muts, &reference, &cfg)?;
    let mutant = apply_mutation_set(&rec.complex, &rec.muts)?;
    let neigh = &sampled.neigh;
    let energy = |coords: &[Point]| {
        if neigh.has_both_groups() {
            energy_of(&mutant, neigh, Some(coords), &reference).ok()
        } else {
            None
        }
    };
    let mask = neigh.site_atom_mask();
    let moved: Vec<f64> = neigh
        .coords
        .iter()
        .zip(&sampled.coords)
        .zip(&mask)
        .filter(|(_, m)| **m)
        .map(|((a, b), _)| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum())
        .collect();
    let site_rmsd = (moved.iter().sum::<f64>() / moved.len().max(1) as f64).sqrt();

    let stage = Stage::begin(ctx.leaf("sample"))?;
    stage.write("mutant.pdb", write_backbone_pdb(&neigh.write_into(&mutant, &sampled.coords)))?;
    stage.write("trajectory.csv", trajectory_csv(neigh, &sampled.trajectory))?;
    stage.write_json(
        "summary.json",
        &SampleSummary {
            row: entry.row,
            pdb_id: rec.complex.pdb_id.clone(),
            mutations: rec.muts.to_string(),
            steps: cfg.steps,
            reference: source,
            n_neighbors: neigh.len(),
            energy_initial: energy(&neigh.coords),
            energy_final: energy(&sampled.coords),
            site_rmsd,
        },
    )?;
    let mut manifest = ctx.manifest("sample");
    manifest.overrides.steps = Some(cfg.steps);
    manifest.inputs = ctx.dataset_inputs(&ds)?;
    stage.commit(manifest)
}
