//! Metrics, complex-disjoint cross-validation folds and mutation ranking.

mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::seeded;

pub use metrics::{auroc, average_ranks, mae, pearson, per_structure_metrics, rmse, spearman, MetricReport, PerStructure};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("non-finite value")]
    NonFinite,
    #[error("zero variance; correlation undefined")]
    ZeroVariance,
    #[error("only one class present; AUROC undefined")]
    SingleClass,
    #[error("no structure qualifies for per-structure metrics ({excluded} excluded)")]
    NoQualifyingGroup { excluded: usize },
    #[error("{n_folds} folds need at least as many complexes, got {got}")]
    TooFewComplexes { n_folds: usize, got: usize },
    #[error("fold {0} out of range")]
    NoSuchFold(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

/// Assignment of complexes to folds plus the validation subset of each training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    /// Test fold of every split key.
    pub assignment: BTreeMap<String, usize>,
    /// Per fold, the keys held out from training for validation.
    pub validation: Vec<BTreeSet<String>>,
}

/// Seeded shuffle of the distinct keys dealt round-robin into folds; in every
/// training split `⌈val_frac · n⌉` (at least one) complexes become validation.
pub fn make_folds(split_keys: &[String], n_folds: usize, val_frac: f64, seed: u64) -> Result<FoldPlan, EvalError> {
    let mut keys: Vec<String> = split_keys.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if n_folds == 0 || keys.len() < n_folds {
        return Err(EvalError::TooFewComplexes { n_folds, got: keys.len() });
    }
    let mut rng = seeded(seed);
    keys.shuffle(&mut rng);
    let assignment: BTreeMap<String, usize> = keys.iter().enumerate().map(|(i, k)| (k.clone(), i % n_folds)).collect();
    let validation = (0..n_folds)
        .map(|f| {
            let train: Vec<&String> = keys.iter().filter(|k| assignment[*k] != f).collect();
            let n_val = ((val_frac * train.len() as f64).ceil() as usize).max(1).min(train.len().saturating_sub(1).max(1));
            train.into_iter().take(n_val).cloned().collect()
        })
        .collect();
    Ok(FoldPlan { n_folds, assignment, validation })
}

impl FoldPlan {
    pub fn role(&self, key: &str, fold: usize) -> Option<Role> {
        let f = *self.assignment.get(key)?;
        Some(if f == fold {
            Role::Test
        } else if self.validation[fold].contains(key) {
            Role::Val
        } else {
            Role::Train
        })
    }

    /// Keys with the given role in `fold`.
    pub fn keys(&self, fold: usize, role: Role) -> Result<BTreeSet<String>, EvalError> {
        if fold >= self.n_folds {
            return Err(EvalError::NoSuchFold(fold));
        }
        Ok(self.assignment.keys().filter(|k| self.role(k, fold) == Some(role)).cloned().collect())
    }

    /// Rows `split_key,fold,role` for every fold.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["split_key", "fold", "role"])?;
        for fold in 0..self.n_folds {
            for key in self.assignment.keys() {
                let role = match self.role(key, fold).expect("assigned") {
                    Role::Train => "train",
                    Role::Val => "val",
                    Role::Test => "test",
                };
                w.write_record([key.as_str(), &fold.to_string(), role])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMutation {
    pub mutation: String,
    pub prediction: f64,
    pub rank: f64,
    pub rank_percent: f64,
}

/// Lowest predicted ΔΔG first; ties share the average rank; `rank_percent = rank / n · 100`.
pub fn rank_mutations(preds: &[(String, f64)]) -> Vec<RankedMutation> {
    let values: Vec<f64> = preds.iter().map(|p| p.1).collect();
    let ranks = average_ranks(&values);
    let n = preds.len() as f64;
    let mut out: Vec<RankedMutation> = preds
        .iter()
        .zip(ranks)
        .map(|((m, p), rank)| RankedMutation { mutation: m.clone(), prediction: *p, rank, rank_percent: rank / n * 100.0 })
        .collect();
    out.sort_by(|a, b| a.rank.total_cmp(&b.rank).then_with(|| a.mutation.cmp(&b.mutation)));
    out
}
