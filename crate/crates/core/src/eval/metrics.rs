use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<(), EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < min {
        return Err(EvalError::TooShort { needed: min, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// 1-based ranks with ties sharing the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y, 2)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y, 1)?;
    Ok((x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64).sqrt())
}

pub fn mae(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y, 1)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64)
}

/// Probability that a record with positive truth gets a higher prediction
/// than one with non-positive truth, ties counting one half.
///
/// Computed from the Mann-Whitney rank sum.
pub fn auroc(preds: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_pair(preds, truth, 1)?;
    let n_pos = truth.iter().filter(|t| **t > 0.0).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let ranks = average_ranks(preds);
    let pos_rank_sum: f64 = ranks.iter().zip(truth).filter(|(_, t)| **t > 0.0).map(|(r, _)| r).sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Mean within-complex correlations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerStructure {
    pub pearson: f64,
    pub spearman: f64,
    pub n_scored: usize,
    /// Groups with fewer than two records or constant values.
    pub n_excluded: usize,
}

/// Groups records by key and averages correlations over qualifying groups.
pub fn per_structure_metrics(keys: &[String], truth: &[f64], preds: &[f64]) -> Result<PerStructure, EvalError> {
    check_pair(truth, preds, 1)?;
    if keys.len() != truth.len() {
        return Err(EvalError::LengthMismatch(keys.len(), truth.len()));
    }
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((k, t), p) in keys.iter().zip(truth).zip(preds) {
        let g = groups.entry(k.as_str()).or_default();
        g.0.push(*t);
        g.1.push(*p);
    }
    let (mut ps, mut ss, mut excluded) = (Vec::new(), Vec::new(), 0);
    for (t, p) in groups.values() {
        match (pearson(t, p), spearman(t, p)) {
            (Ok(a), Ok(b)) => {
                ps.push(a);
                ss.push(b);
            }
            _ => excluded += 1,
        }
    }
    if ps.is_empty() {
        return Err(EvalError::NoQualifyingGroup { excluded });
    }
    Ok(PerStructure { pearson: mean(&ps), spearman: mean(&ss), n_scored: ps.len(), n_excluded: excluded })
}

/// Summary written by the evaluate command. Undefined metrics are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
    pub auroc: Option<f64>,
    pub per_structure_pearson: Option<f64>,
    pub per_structure_spearman: Option<f64>,
    pub n_records: usize,
    pub n_structures_scored: usize,
    pub n_structures_excluded: usize,
}

impl MetricReport {
    pub fn compute(keys: &[String], truth: &[f64], preds: &[f64]) -> Result<Self, EvalError> {
        let per = per_structure_metrics(keys, truth, preds).ok();
        let n_groups = keys.iter().collect::<std::collections::BTreeSet<_>>().len();
        Ok(Self {
            pearson: pearson(truth, preds).ok(),
            spearman: spearman(truth, preds).ok(),
            rmse: rmse(truth, preds)?,
            mae: mae(truth, preds)?,
            auroc: auroc(preds, truth).ok(),
            per_structure_pearson: per.map(|p| p.pearson),
            per_structure_spearman: per.map(|p| p.spearman),
            n_records: truth.len(),
            n_structures_scored: per.map_or(0, |p| p.n_scored),
            n_structures_excluded: per.map_or(n_groups, |p| p.n_excluded),
        })
    }
}
