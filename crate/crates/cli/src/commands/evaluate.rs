use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ebmddg::eval::MetricReport;
use serde::{Deserialize, Serialize};

use super::Context;
use crate::error::CliError;
use crate::run::{InputFile, Stage};

/// One line of `predictions.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub row: usize,
    pub pdb_id: String,
    pub split_key: String,
    pub fold: usize,
    pub mutations: String,
    /// Measured ΔΔG when known.
    pub ddg: Option<f64>,
    pub ddg_hat: f64,
    pub ddg_ba: f64,
    pub dde: f64,
    pub degenerate: bool,
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| CliError::input(format!("{} row {}: {e}", path.display(), i + 1))))
        .collect()
}

fn report(rows: &[&PredictionRow]) -> Result<MetricReport, CliError> {
    let mut keys = Vec::new();
    let mut truth = Vec::new();
    let mut preds = Vec::new();
    for r in rows {
        if let Some(t) = r.ddg {
            keys.push(r.split_key.clone());
            truth.push(t);
            preds.push(r.ddg_hat);
        }
    }
    Ok(MetricReport::compute(&keys, &truth, &preds)?)
}

/// Scores a predictions file (default: this run's `predict` output) and writes
/// `metric_report.json` plus one report per fold.
pub fn evaluate(ctx: &Context, predictions: Option<&Path>) -> Result<PathBuf, CliError> {
    let default = ctx.leaf("predict").join("predictions.csv");
    let path = predictions.unwrap_or(&default);
    if !path.is_file() {
        return Err(CliError::input(format!("{} is missing; run predict first", path.display())));
    }
    let rows = read_predictions(path)?;
    let all: Vec<&PredictionRow> = rows.iter().collect();
    let overall = report(&all)?;
    let mut per_fold = BTreeMap::new();
    for fold in rows.iter().map(|r| r.fold).collect::<std::collections::BTreeSet<_>>() {
        let subset: Vec<&PredictionRow> = rows.iter().filter(|r| r.fold == fold).collect();
        match report(&subset) {
            Ok(r) => {
                per_fold.insert(fold.to_string(), r);
            }
            Err(e) => log::warn!("fold {fold}: {e}"),
        }
    }
    let stage = Stage::begin(ctx.leaf("evaluate"))?;
    stage.write_json("metric_report.json", &overall)?;
    stage.write_json("per_fold.json", &per_fold)?;
    let mut manifest = ctx.manifest("evaluate");
    manifest.inputs.push(InputFile::hash(path)?);
    log::info!(
        "pearson {:?} spearman {:?} rmse {:.4} per-structure pearson {:?}",
        overall.pearson,
        overall.spearman,
        overall.rmse,
        overall.per_structure_pearson
    );
    stage.commit(manifest)
}
