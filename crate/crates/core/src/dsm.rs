//! Gaussian denoising score matching for the energy model.
//!
//! Backbone atoms of a neighborhood are perturbed, `X̂ = X + ε` with
//! `ε ~ N(0, σ² I)`, and the model is trained so that `∂E/∂X̂` matches `ε/σ²`.
//! The parameter gradient of the loss needs a Hessian-vector product; it is
//! obtained by running the reverse pass on dual numbers whose tangent is the
//! score residual.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{EnergyError, EnergyModel};
use crate::geometry::{select_around, Neighborhood};
use crate::ingest::{Complex, Point};
use crate::net::{flatten, Adam, AdamConfig, NetError};
use crate::rng::{derive_seed, normal, seeded, Rng};
use crate::scalar::Dual;
use rand::RngExt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DsmConfig {
    /// Noise standard deviation in A.
    pub sigma: f64,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    /// Neighbors per site.
    pub k: usize,
    /// Neighborhoods per optimizer step.
    pub batch_size: usize,
}

impl Default for DsmConfig {
    fn default() -> Self {
        Self { sigma: 0.1f64.sqrt(), steps: 1000, lr: 1e-4, seed: 0, k: 8, batch_size: 2 }
    }
}

#[derive(Debug, Error)]
pub enum DsmError {
    #[error("no neighborhood with both binder and target residues")]
    NoNeighborhoods,
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("loss diverged at step {step}")]
    Diverged { step: usize, last_good: Box<EnergyModel<f64>> },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Clean coordinates, noise draw and perturbed coordinates of one neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct DsmBatch {
    pub neigh: Neighborhood,
    pub eps: Vec<Point>,
    pub noisy: Vec<Point>,
}

impl DsmBatch {
    pub fn new(neigh: Neighborhood, eps: Vec<Point>) -> Self {
        let noisy = neigh.coords.iter().zip(&eps).map(|(x, e)| [x[0] + e[0], x[1] + e[1], x[2] + e[2]]).collect();
        Self { neigh, eps, noisy }
    }

    pub fn draw(neigh: &Neighborhood, sigma: f64, rng: &mut Rng) -> Self {
        let eps = (0..neigh.n_atoms()).map(|_| [0, 1, 2].map(|_| sigma * normal(rng))).collect();
        Self::new(neigh.clone(), eps)
    }
}

/// Mean over coordinates of `(score - ε/σ²)²`.
pub fn dsm_loss_from_score(score: &[Point], eps: &[Point], sigma: f64) -> f64 {
    let inv = 1.0 / (sigma * sigma);
    let mut total = 0.0;
    for (s, e) in score.iter().zip(eps) {
        for k in 0..3 {
            let r = s[k] - e[k] * inv;
            total += r * r;
        }
    }
    total / (3 * score.len()) as f64
}

fn score(model: &EnergyModel<f64>, batch: &DsmBatch) -> Result<Vec<Point>, DsmError> {
    let (aa, groups) = (batch.neigh.amino_acids(), batch.neigh.groups());
    let s = model.energy_and_grads(&aa, &groups, &batch.noisy)?.coords;
    if s.iter().flatten().any(|v| !v.is_finite()) {
        return Err(DsmError::NonFiniteScore);
    }
    Ok(s)
}

pub fn dsm_loss(model: &EnergyModel<f64>, batch: &DsmBatch, sigma: f64) -> Result<f64, DsmError> {
    Ok(dsm_loss_from_score(&score(model, batch)?, &batch.eps, sigma))
}

/// Loss and its gradient with respect to the model parameters.
pub fn dsm_loss_and_grad(model: &EnergyModel<f64>, batch: &DsmBatch, sigma: f64) -> Result<(f64, EnergyModel<f64>), DsmError> {
    let s = score(model, batch)?;
    let loss = dsm_loss_from_score(&s, &batch.eps, sigma);
    let inv = 1.0 / (sigma * sigma);
    let m = (3 * s.len()) as f64;
    // dL/dθ = (2/m) ∇θ <r, ∇X E> with r = s - ε/σ², the tangent of ∇θ E along r
    let x: Vec<[Dual<f64>; 3]> = batch
        .noisy
        .iter()
        .zip(&s)
        .zip(&batch.eps)
        .map(|((p, sc), e)| [0, 1, 2].map(|k| Dual::new(p[k], sc[k] - e[k] * inv)))
        .collect();
    let dual_model = model.map(Dual::constant);
    let g = dual_model.energy_and_grads(&batch.neigh.amino_acids(), &batch.neigh.groups(), &x)?;
    let grad = g.params.map(|d| 2.0 * d.eps / m);
    Ok((loss, grad))
}

/// Minimizer of `mean (c·s - ε/σ²)²` over a free score vector `s`, by gradient descent.
pub fn minimize_scaled_score(eps: &[Point], sigma: f64, c: f64, iters: usize) -> Vec<Point> {
    let inv = 1.0 / (sigma * sigma);
    let m = (3 * eps.len()) as f64;
    let lr = 0.5 * m / (2.0 * c * c);
    let mut s = vec![[0.0; 3]; eps.len()];
    for _ in 0..iters {
        for (si, e) in s.iter_mut().zip(eps) {
            for k in 0..3 {
                let grad = 2.0 * c * (c * si[k] - e[k] * inv) / m;
                si[k] -= lr * grad;
            }
        }
    }
    s
}

/// Neighborhoods around every residue whose `k`-neighborhood spans both groups.
pub fn training_neighborhoods(complexes: &[Complex], k: usize) -> Vec<Neighborhood> {
    complexes
        .par_iter()
        .flat_map_iter(|c| {
            c.residues()
                .filter(|r| r.has_full_backbone())
                .filter_map(|r| select_around(c, &[r.id], k).ok())
                .filter(Neighborhood::has_both_groups)
                .collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsmLogRow {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct DsmOutcome {
    pub model: EnergyModel<f64>,
    pub log: Vec<DsmLogRow>,
}

/// Trains `init` for `config.steps` Adam updates on batches drawn from `neighborhoods`.
pub fn dsm_pretrain_on(neighborhoods: &[Neighborhood], init: EnergyModel<f64>, config: &DsmConfig) -> Result<DsmOutcome, DsmError> {
    if config.steps == 0 {
        return Ok(DsmOutcome { model: init, log: Vec::new() });
    }
    if neighborhoods.is_empty() {
        return Err(DsmError::NoNeighborhoods);
    }
    let mut rng = seeded(config.seed);
    let mut model = init;
    let mut theta = flatten(&model);
    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..Default::default() }, theta.len());
    let mut log = Vec::with_capacity(config.steps);
    let batch_size = config.batch_size.max(1);
    for step in 1..=config.steps {
        let batches: Vec<DsmBatch> = (0..batch_size)
            .map(|_| {
                let n = &neighborhoods[rng.random_range(0..neighborhoods.len())];
                DsmBatch::draw(n, config.sigma, &mut rng)
            })
            .collect();
        let results = batches
            .par_iter()
            .map(|b| dsm_loss_and_grad(&model, b, config.sigma))
            .collect::<Result<Vec<_>, _>>();
        let results = match results {
            Ok(r) => r,
            Err(DsmError::NonFiniteScore) => return Err(DsmError::Diverged { step, last_good: Box::new(model) }),
            Err(e) => return Err(e),
        };
        let mut loss = 0.0;
        let mut grad = vec![0.0; theta.len()];
        for (l, g) in &results {
            loss += l / batch_size as f64;
            for (acc, v) in grad.iter_mut().zip(flatten(g)) {
                *acc += v / batch_size as f64;
            }
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(DsmError::Diverged { step, last_good: Box::new(model) });
        }
        adam.step(&mut theta, &grad)?;
        crate::net::assign(&mut model, &theta);
        log.push(DsmLogRow { step, loss });
        if step % 100 == 0 {
            log::info!("dsm step {step} loss {loss:.5}");
        }
    }
    Ok(DsmOutcome { model, log })
}

/// Pretrains on all interface neighborhoods of `complexes`.
pub fn dsm_pretrain(complexes: &[Complex], init: EnergyModel<f64>, config: &DsmConfig) -> Result<DsmOutcome, DsmError> {
    let neighborhoods = training_neighborhoods(complexes, config.k);
    dsm_pretrain_on(&neighborhoods, init, config)
}

/// Mean loss over `draws` noise samples per neighborhood with a fixed seed.
pub fn dsm_eval_loss(model: &EnergyModel<f64>, neighborhoods: &[Neighborhood], sigma: f64, draws: usize, seed: u64) -> Result<f64, DsmError> {
    let losses = neighborhoods
        .par_iter()
        .enumerate()
        .map(|(i, n)| {
            let mut rng = seeded(derive_seed(seed, i as u64));
            let mut total = 0.0;
            for _ in 0..draws {
                total += dsm_loss(model, &DsmBatch::draw(n, sigma, &mut rng), sigma)?;
            }
            Ok(total / draws as f64)
        })
        .collect::<Result<Vec<f64>, DsmError>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}
