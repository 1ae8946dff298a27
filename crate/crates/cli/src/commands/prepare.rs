use std::collections::BTreeMap;
use std::path::PathBuf;

use ebmddg::dsm::{dsm_eval_loss, dsm_pretrain_on, training_neighborhoods};
use ebmddg::eval::make_folds;
use serde::Serialize;

use super::Context;
use crate::error::CliError;
use crate::models::save_energy;
use crate::run::Stage;

#[derive(Debug, Serialize)]
struct RecordRow {
    row: usize,
    pdb_id: String,
    split_key: String,
    mutations: String,
    n_mutations: usize,
    ddg: f64,
}

#[derive(Debug, Serialize)]
pub struct DatasetSummary {
    pub n_records: usize,
    pub n_skipped: usize,
    pub dropped_missing_ddg: usize,
    pub n_complexes: usize,
    pub n_split_keys: usize,
    pub records_per_split_key: BTreeMap<String, usize>,
    /// Count of records by number of mutated sites.
    pub mutation_counts: BTreeMap<usize, usize>,
    pub ddg_mean: f64,
    pub ddg_std: f64,
}

/// Parses the table and structures; writes a summary, the usable records,
/// the skipped rows and the fold plan.
pub fn ingest(ctx: &Context) -> Result<PathBuf, CliError> {
    let ds = ctx.dataset()?;
    let stage = Stage::begin(ctx.root.join("ingest"))?;
    let mut per_key = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for e in &ds.entries {
        *per_key.entry(e.record.split_key.clone()).or_insert(0) += 1;
        *counts.entry(e.record.muts.len()).or_insert(0) += 1;
    }
    let n = ds.entries.len().max(1) as f64;
    let mean = ds.entries.iter().map(|e| e.record.ddg).sum::<f64>() / n;
    let var = ds.entries.iter().map(|e| (e.record.ddg - mean).powi(2)).sum::<f64>() / n;
    let summary = DatasetSummary {
        n_records: ds.entries.len(),
        n_skipped: ds.skipped.len(),
        dropped_missing_ddg: ds.dropped_missing_ddg,
        n_complexes: ds.complexes.len(),
        n_split_keys: per_key.len(),
        records_per_split_key: per_key,
        mutation_counts: counts,
        ddg_mean: mean,
        ddg_std: var.sqrt(),
    };
    stage.write_json("summary.json", &summary)?;
    let rows: Vec<RecordRow> = ds
        .entries
        .iter()
        .map(|e| RecordRow {
            row: e.row,
            pdb_id: e.record.complex.pdb_id.clone(),
            split_key: e.record.split_key.clone(),
            mutations: e.record.muts.to_string(),
            n_mutations: e.record.muts.len(),
            ddg: e.record.ddg,
        })
        .collect();
    stage.write_csv("records.csv", &rows)?;
    stage.write_csv("skipped.csv", &ds.skipped)?;
    match make_folds(&ds.split_keys(), ctx.config.folds.n_folds, ctx.config.folds.val_frac, ctx.config.folds.seed) {
        Ok(plan) => {
            let mut buf = Vec::new();
            plan.write_csv(&mut buf)?;
            stage.write("folds.csv", buf)?;
        }
        Err(e) => log::warn!("no fold plan: {e}"),
    }
    let mut manifest = ctx.manifest("ingest");
    manifest.inputs = ctx.dataset_inputs(&ds)?;
    log::info!("ingested {} records on {} complexes ({} skipped)", summary.n_records, summary.n_complexes, summary.n_skipped);
    stage.commit(manifest)
}

#[derive(Debug, Serialize)]
struct PretrainSummary {
    n_complexes: usize,
    n_neighborhoods: usize,
    steps: usize,
    /// Held-out-noise loss before and after training (fixed seed, 4 draws).
    eval_loss_initial: f64,
    eval_loss_final: f64,
}

/// Denoising score matching on every complex in the table.
pub fn pretrain(ctx: &Context) -> Result<PathBuf, CliError> {
    let ds = ctx.dataset()?;
    let complexes = ds.all_complexes();
    let cfg = &ctx.config.dsm;
    let neighborhoods = training_neighborhoods(&complexes, cfg.k);
    let init = ctx.fresh_energy();
    let eval_seed = ctx.config.seed_of("dsm") ^ 0x5eed;
    let eval_loss_initial = if neighborhoods.is_empty() { f64::NAN } else { dsm_eval_loss(&init, &neighborhoods, cfg.sigma, 4, eval_seed)? };
    let outcome = dsm_pretrain_on(&neighborhoods, init, cfg)?;
    let eval_loss_final =
        if neighborhoods.is_empty() { f64::NAN } else { dsm_eval_loss(&outcome.model, &neighborhoods, cfg.sigma, 4, eval_seed)? };
    let stage = Stage::begin(ctx.root.join("pretrain"))?;
    save_energy(&stage.file("energy.ckpt"), &outcome.model)?;
    stage.write_csv("dsm_log.csv", &outcome.log)?;
    stage.write_json(
        "summary.json",
        &PretrainSummary {
            n_complexes: complexes.len(),
            n_neighborhoods: neighborhoods.len(),
            steps: outcome.log.len(),
            eval_loss_initial,
            eval_loss_final,
        },
    )?;
    let mut manifest = ctx.manifest("pretrain");
    manifest.inputs = ctx.dataset_inputs(&ds)?;
    log::info!("pretrained on {} neighborhoods: eval loss {eval_loss_initial:.4} -> {eval_loss_final:.4}", neighborhoods.len());
    stage.commit(manifest)
}
