use std::collections::BTreeSet;
use std::path::PathBuf;

use ebmddg::ddg::{prepare_record, train as fit, PreparedRecord, TrainState};
use ebmddg::energy::EnergyModel;
use ebmddg::eval::{make_folds, FoldPlan, Role};
use ebmddg::seqmodel::{train_toy_provider, LogProbProvider, ToyProvider};
use rayon::prelude::*;
use serde::Serialize;

use super::Context;
use crate::data::{Dataset, Entry};
use crate::error::CliError;
use crate::models::{save_energy, save_head, save_toy};
use crate::run::{Overrides, Stage};

#[derive(Debug, Serialize)]
struct TrainSummary {
    fold: usize,
    provider: String,
    reference: String,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    train_complexes: Vec<String>,
    val_complexes: Vec<String>,
    test_complexes: Vec<String>,
    steps: usize,
    best_epoch: usize,
    best_val_mse: Option<f64>,
}

fn prepare(
    ctx: &Context,
    entries: &[&Entry],
    provider: &dyn LogProbProvider,
    reference: &EnergyModel<f64>,
) -> Result<Vec<PreparedRecord>, CliError> {
    Ok(entries
        .par_iter()
        .map(|e| prepare_record(&e.record, provider, reference, &reference.config, &ctx.record_config(e.row)))
        .collect::<Result<Vec<_>, _>>()?)
}

pub fn fold_plan(ctx: &Context, ds: &Dataset) -> Result<FoldPlan, CliError> {
    let f = &ctx.config.folds;
    Ok(make_folds(&ds.split_keys(), f.n_folds, f.val_frac, f.seed)?)
}

/// Trains every fold (or the `--fold` one); each fold is published separately
/// under `train/fold-<f>`.
pub fn train(ctx: &Context) -> Result<PathBuf, CliError> {
    if ctx.overrides.steps.is_some() {
        log::warn!("--steps does not apply to train; using langevin.steps from the config");
    }
    let ctx = Context { overrides: Overrides { steps: None, ..ctx.overrides.clone() }, ..ctx.clone() };
    let ds = ctx.dataset()?;
    let plan = fold_plan(&ctx, &ds)?;
    let (reference, reference_source) = ctx.reference()?;
    let logprobs = ctx.logprobs()?;
    let folds: Vec<usize> = match ctx.overrides.fold {
        Some(f) => vec![f],
        None => (0..ctx.config.folds.n_folds).collect(),
    };
    let mut inputs = ctx.dataset_inputs(&ds)?;
    if let Some((_, f)) = &logprobs {
        inputs.push(f.clone());
    }
    if let Some(p) = &ctx.config.paths.reference_checkpoint {
        inputs.push(crate::run::InputFile::hash(p)?);
    }
    let mut fold_csv = Vec::new();
    plan.write_csv(&mut fold_csv)?;

    for fold in folds {
        let keys = |role| plan.keys(fold, role).map_err(CliError::from);
        let (train_keys, val_keys, test_keys) = (keys(Role::Train)?, keys(Role::Val)?, keys(Role::Test)?);
        let pick = |ks: &BTreeSet<String>| ds.entries.iter().filter(|e| ks.contains(&e.record.split_key)).collect::<Vec<_>>();
        let (train_entries, val_entries) = (pick(&train_keys), pick(&val_keys));
        let n_test = pick(&test_keys).len();
        log::info!("fold {fold}: {} train, {} val, {n_test} test records", train_entries.len(), val_entries.len());

        let stage = Stage::begin(ctx.fold_dir(fold))?;
        let toy: Option<ToyProvider> = match &logprobs {
            Some(_) => None,
            None => {
                let fit_keys: BTreeSet<String> = train_keys.union(&val_keys).cloned().collect();
                let (toy, toy_log) = train_toy_provider(&ds.complexes_for(&fit_keys), &ctx.config.toy)?;
                stage.write_csv("toy_log.csv", &toy_log)?;
                Some(toy)
            }
        };
        let provider: &dyn LogProbProvider = match (&logprobs, &toy) {
            (Some((table, _)), _) => table,
            (None, Some(t)) => t,
            (None, None) => unreachable!("one provider is always set"),
        };
        let train_set = prepare(&ctx, &train_entries, provider, &reference)?;
        let val_set = prepare(&ctx, &val_entries, provider, &reference)?;
        let init = TrainState { head: ctx.config.head, energy: reference.clone(), provider: toy.clone() };
        let outcome = fit(&train_set, &val_set, init, toy.as_ref(), &ctx.config.training)?;

        save_head(&stage.file("head.json"), &outcome.best.head)?;
        save_energy(&stage.file("energy.ckpt"), &outcome.best.energy)?;
        save_energy(&stage.file("reference.ckpt"), &reference)?;
        if let Some(p) = &outcome.best.provider {
            save_toy(&stage.file("provider.ckpt"), p)?;
        }
        stage.write_csv("train_log.csv", &outcome.log)?;
        stage.write("folds.csv", &fold_csv)?;
        let best_val_mse = outcome.log.iter().find(|r| r.epoch == outcome.best_epoch).and_then(|r| r.val_mse);
        stage.write_json(
            "summary.json",
            &TrainSummary {
                fold,
                provider: if toy.is_some() { "toy".into() } else { "file".into() },
                reference: reference_source.clone(),
                n_train: train_set.len(),
                n_val: val_set.len(),
                n_test,
                train_complexes: train_keys.into_iter().collect(),
                val_complexes: val_keys.into_iter().collect(),
                test_complexes: test_keys.into_iter().collect(),
                steps: outcome.steps,
                best_epoch: outcome.best_epoch,
                best_val_mse,
            },
        )?;
        let mut manifest = ctx.manifest("train");
        manifest.overrides.fold = Some(fold);
        manifest.inputs = inputs.clone();
        stage.commit(manifest)?;
    }
    Ok(ctx.root.join("train"))
}
