use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ebmddg::ddg::{predict as predict_one, DdgHead, DdgPrediction};
use ebmddg::energy::EnergyModel;
use ebmddg::eval::{rank_mutations, MetricReport, Role};
use ebmddg::ingest::{Complex, MutationSet};
use ebmddg::seqmodel::{LogProbProvider, PrecomputedLogProbs, ToyProvider};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::PredictionRow;
use super::train::fold_plan;
use super::Context;
use crate::data::load_candidates;
use crate::error::CliError;
use crate::models::{load_energy, load_head, load_toy};
use crate::run::{write_atomic, InputFile, Overrides, Stage};

pub const METRICS_VS_T: &str = "metrics_vs_T.csv";

/// Trained artifacts of one fold.
struct FoldModel {
    head: DdgHead,
    energy: EnergyModel<f64>,
    reference: EnergyModel<f64>,
    toy: Option<ToyProvider>,
}

impl FoldModel {
    fn load(ctx: &Context, fold: usize) -> Result<Self, CliError> {
        let dir = ctx.fold_dir(fold);
        let toy_path = dir.join("provider.ckpt");
        Ok(Self {
            head: load_head(&dir.join("head.json"))?,
            energy: load_energy(&dir.join("energy.ckpt"))?,
            reference: load_energy(&dir.join("reference.ckpt"))?,
            toy: if toy_path.is_file() { Some(load_toy(&toy_path)?) } else { None },
        })
    }

    fn provider<'a>(&'a self, file: Option<&'a PrecomputedLogProbs>, fold: usize) -> Result<&'a dyn LogProbProvider, CliError> {
        match (&self.toy, file) {
            (Some(t), _) => Ok(t),
            (None, Some(f)) => Ok(f),
            (None, None) => Err(CliError::Config(vec![format!(
                "paths.logprob_file: fold {fold} was trained with precomputed log-probabilities; supply the file"
            )])),
        }
    }

    fn predict(
        &self,
        ctx: &Context,
        provider: &dyn LogProbProvider,
        complex: &Complex,
        muts: &MutationSet,
        row: usize,
    ) -> Result<DdgPrediction, CliError> {
        Ok(predict_one(complex, muts, provider, &self.reference, &self.energy, &self.head, &ctx.record_config(row))?)
    }
}

/// One row of the metrics-versus-T table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsVsT {
    #[serde(rename = "T")]
    pub t: usize,
    pub n_records: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
    pub auroc: Option<f64>,
    pub per_structure_pearson: Option<f64>,
    pub per_structure_spearman: Option<f64>,
}

impl MetricsVsT {
    fn new(t: usize, r: &MetricReport) -> Self {
        Self {
            t,
            n_records: r.n_records,
            pearson: r.pearson,
            spearman: r.spearman,
            rmse: r.rmse,
            mae: r.mae,
            auroc: r.auroc,
            per_structure_pearson: r.per_structure_pearson,
            per_structure_spearman: r.per_structure_spearman,
        }
    }
}

fn upsert_metrics_vs_t(path: &Path, row: MetricsVsT) -> Result<(), CliError> {
    let mut rows: Vec<MetricsVsT> = if path.is_file() {
        csv::Reader::from_path(path)?.deserialize().collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    rows.retain(|r| r.t != row.t);
    rows.push(row);
    rows.sort_by_key(|r| r.t);
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    write_atomic(path, w.into_inner().map_err(CliError::internal)?)
}

/// Predicts the test records of every trained fold (or the `--fold` one).
///
/// Writes `predictions.csv`, `metrics.json` when the metrics are defined, and
/// updates `metrics_vs_T.csv` in the run root.
pub fn predict(ctx: &Context) -> Result<PathBuf, CliError> {
    let ds = ctx.dataset()?;
    let plan = fold_plan(ctx, &ds)?;
    let logprobs = ctx.logprobs()?;
    let folds = ctx.trained_folds()?;
    let mut rows = Vec::new();
    for &fold in &folds {
        let model = FoldModel::load(ctx, fold)?;
        let provider = model.provider(logprobs.as_ref().map(|l| &l.0), fold)?;
        let test: BTreeSet<String> = plan.keys(fold, Role::Test)?;
        let entries: Vec<_> = ds.entries.iter().filter(|e| test.contains(&e.record.split_key)).collect();
        let preds = entries
            .par_iter()
            .map(|e| model.predict(ctx, provider, &e.record.complex, &e.record.muts, e.row))
            .collect::<Result<Vec<_>, _>>()?;
        for (e, p) in entries.iter().zip(preds) {
            rows.push(PredictionRow {
                row: e.row,
                pdb_id: e.record.complex.pdb_id.clone(),
                split_key: e.record.split_key.clone(),
                fold,
                mutations: e.record.muts.to_string(),
                ddg: Some(e.record.ddg),
                ddg_hat: p.ddg_hat,
                ddg_ba: p.ddg_ba,
                dde: p.dde,
                degenerate: p.degenerate,
            });
        }
        log::info!("fold {fold}: predicted {} records", entries.len());
    }
    rows.sort_by_key(|r| r.row);

    let stage = Stage::begin(ctx.leaf("predict"))?;
    stage.write_csv("predictions.csv", &rows)?;
    let keys: Vec<String> = rows.iter().map(|r| r.split_key.clone()).collect();
    let truth: Vec<f64> = rows.iter().filter_map(|r| r.ddg).collect();
    let preds: Vec<f64> = rows.iter().map(|r| r.ddg_hat).collect();
    match MetricReport::compute(&keys, &truth, &preds) {
        Ok(report) => {
            stage.write_json("metrics.json", &report)?;
            upsert_metrics_vs_t(&ctx.root.join(METRICS_VS_T), MetricsVsT::new(ctx.steps(), &report))?;
        }
        Err(e) => log::warn!("metrics undefined for these predictions: {e}"),
    }
    let mut manifest = ctx.manifest("predict");
    manifest.overrides.steps = Some(ctx.steps());
    manifest.inputs = ctx.dataset_inputs(&ds)?;
    if let Some((_, f)) = &logprobs {
        manifest.inputs.push(f.clone());
    }
    stage.commit(manifest)
}

/// Runs `predict` once per entry of `sweep_steps` and collects the metric table.
pub fn sweep(ctx: &Context) -> Result<PathBuf, CliError> {
    for &t in &ctx.config.sweep_steps {
        let sub = Context { overrides: Overrides { steps: Some(t), ..ctx.overrides.clone() }, ..ctx.clone() };
        predict(&sub)?;
    }
    let table = ctx.root.join(METRICS_VS_T);
    let stage = Stage::begin(ctx.root.join("sweep"))?;
    if table.is_file() {
        stage.write(METRICS_VS_T, fs::read(&table)?)?;
    }
    stage.commit(ctx.manifest("sweep"))
}

#[derive(Debug, Serialize)]
struct RankRow {
    rank: f64,
    rank_percent: f64,
    row: usize,
    pdb_id: String,
    mutations: String,
    prediction: f64,
    ddg: Option<f64>,
}

/// Scores a candidate table with one fold's model and ranks lowest ΔΔG first.
pub fn rank(ctx: &Context) -> Result<PathBuf, CliError> {
    let Some(structures) = &ctx.config.paths.structures_dir else {
        return Err(CliError::Config(vec!["paths.structures_dir: required by rank".into()]));
    };
    let Some(table) = &ctx.config.paths.candidates_csv else {
        return Err(CliError::Config(vec!["paths.candidates_csv: required by rank".into()]));
    };
    let fold = ctx.overrides.fold.unwrap_or(0);
    if !ctx.fold_dir(fold).is_dir() {
        return Err(CliError::input(format!("{} is missing; run train first", ctx.fold_dir(fold).display())));
    }
    let (candidates, skipped) = load_candidates(structures, table, ctx.config.langevin.k)?;
    if candidates.is_empty() {
        return Err(CliError::input("no usable candidates"));
    }
    let logprobs = ctx.logprobs()?;
    let model = FoldModel::load(ctx, fold)?;
    let provider = model.provider(logprobs.as_ref().map(|l| &l.0), fold)?;
    let preds = candidates
        .par_iter()
        .map(|c| model.predict(ctx, provider, &c.complex, &c.muts, c.row).map(|p| p.ddg_hat))
        .collect::<Result<Vec<f64>, _>>()?;
    let labeled: Vec<(String, f64)> = candidates.iter().zip(&preds).map(|(c, p)| (c.row.to_string(), *p)).collect();
    let rows: Vec<RankRow> = rank_mutations(&labeled)
        .into_iter()
        .map(|r| {
            let c = candidates.iter().find(|c| c.row.to_string() == r.mutation).expect("labels are candidate rows");
            RankRow {
                rank: r.rank,
                rank_percent: r.rank_percent,
                row: c.row,
                pdb_id: c.complex.pdb_id.clone(),
                mutations: c.muts.to_string(),
                prediction: r.prediction,
                ddg: c.ddg,
            }
        })
        .collect();
    let stage = Stage::begin(ctx.leaf("rank"))?;
    stage.write_csv("ranking.csv", &rows)?;
    stage.write_csv("skipped.csv", &skipped)?;
    let mut manifest = ctx.manifest("rank");
    manifest.overrides.fold = Some(fold);
    manifest.overrides.steps = Some(ctx.steps());
    manifest.inputs.push(InputFile::hash(table)?);
    if let Some((_, f)) = &logprobs {
        manifest.inputs.push(f.clone());
    }
    stage.commit(manifest)
}
