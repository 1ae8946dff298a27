//! Langevin sampling of mutant backbone coordinates under a frozen energy model.
//!
//! `x_t = x_{t-1} + α_t s(x_{t-1}) + η_t ε_t` with `s = -∇E` and standard-normal
//! `ε_t`. Step `t` uses the schedule value at `t - 1`, so the first update
//! runs at `α₀, η₀` and the schedule reaches zero at `t = T`. Only atoms
//! flagged movable are updated; the rest enter the score but stay fixed.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{EnergyError, EnergyModel};
use crate::geometry::{select_neighborhood, GeometryError, Neighborhood};
use crate::ingest::{apply_mutation_set, BackboneAtom, Complex, IngestError, MutationSet, Point};
use crate::rng::{normal_points, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Cosine,
    /// Fixed `α₀, η₀` at every step.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LangevinConfig {
    /// Number of updates `T`.
    pub steps: usize,
    pub alpha0: f64,
    pub eta0: f64,
    /// Prior noise variance (A²) of the score target.
    pub sigma2_prior: f64,
    pub seed: u64,
    pub schedule: Schedule,
    /// Neighbors per mutation site.
    pub k: usize,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self { steps: 10, alpha0: 0.001, eta0: 0.01, sigma2_prior: 0.1, seed: 0, schedule: Schedule::Cosine, k: 8 }
    }
}

impl LangevinConfig {
    /// `(α, η)` used by update `t` (1-based).
    pub fn step_sizes(&self, t: usize) -> (f64, f64) {
        match self.schedule {
            Schedule::Cosine => {
                (cosine_schedule(t - 1, self.steps, self.alpha0), cosine_schedule(t - 1, self.steps, self.eta0))
            }
            Schedule::Constant => (self.alpha0, self.eta0),
        }
    }
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("non-finite coordinates at step {step}")]
    NonFinite { step: usize },
    #[error("noise draw for step {step} has {got} points, expected {expected}")]
    NoiseLayout { step: usize, expected: usize, got: usize },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// `v₀ · ½(1 + cos(π t / T))`.
pub fn cosine_schedule(t: usize, total: usize, v0: f64) -> f64 {
    if total == 0 {
        return v0;
    }
    v0 * 0.5 * (1.0 + (PI * t as f64 / total as f64).cos())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `T + 1` snapshots, `x₀` first.
    pub snapshots: Vec<Vec<Point>>,
    /// Step sizes of updates `1..=T`.
    pub alphas: Vec<f64>,
    pub etas: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &[Point] {
        self.snapshots.last().expect("at least the initial snapshot")
    }
}

/// Runs the update with caller-supplied gradient and noise.
///
/// `grad` returns `∇E` at the given coordinates; `noise(t)` returns the
/// standard-normal draw for update `t` in the full layout.
pub fn langevin_with_noise<E>(
    x0: &[Point],
    movable: &[bool],
    mut grad: impl FnMut(&[Point]) -> Result<Vec<Point>, E>,
    mut noise: impl FnMut(usize) -> Vec<Point>,
    config: &LangevinConfig,
) -> Result<Trajectory, E>
where
    E: From<SamplerError>,
{
    assert_eq!(x0.len(), movable.len(), "movable mask layout");
    let mut x = x0.to_vec();
    let mut traj = Trajectory { snapshots: vec![x.clone()], alphas: Vec::new(), etas: Vec::new() };
    for t in 1..=config.steps {
        let (alpha, eta) = config.step_sizes(t);
        let g = grad(&x)?;
        let eps = noise(t);
        if eps.len() != x.len() {
            return Err(SamplerError::NoiseLayout { step: t, expected: x.len(), got: eps.len() }.into());
        }
        for i in (0..x.len()).filter(|&i| movable[i]) {
            for k in 0..3 {
                x[i][k] += -alpha * g[i][k] + eta * eps[i][k];
            }
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SamplerError::NonFinite { step: t }.into());
        }
        traj.alphas.push(alpha);
        traj.etas.push(eta);
        traj.snapshots.push(x.clone());
    }
    Ok(traj)
}

/// Seeded standard-normal noise.
pub fn langevin<E>(
    x0: &[Point],
    movable: &[bool],
    grad: impl FnMut(&[Point]) -> Result<Vec<Point>, E>,
    config: &LangevinConfig,
) -> Result<Trajectory, E>
where
    E: From<SamplerError>,
{
    let mut rng = seeded(config.seed);
    let n = x0.len();
    langevin_with_noise(x0, movable, grad, move |_| normal_points(&mut rng, n), config)
}

/// Gradient of the energy over a neighborhood; identically zero when only one group is present.
pub fn energy_gradient(model: &EnergyModel<f64>, neigh: &Neighborhood, coords: &[Point]) -> Result<Vec<Point>, SamplerError> {
    if !neigh.has_both_groups() {
        return Ok(vec![[0.0; 3]; coords.len()]);
    }
    Ok(model.energy_and_grads(&neigh.amino_acids(), &neigh.groups(), coords)?.coords)
}

/// A sampled mutant neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledStructure {
    /// Neighborhood carrying the mutant sequence and the wild-type coordinates.
    pub neigh: Neighborhood,
    /// Final coordinates `x_T`.
    pub coords: Vec<Point>,
    pub trajectory: Trajectory,
}

/// Samples mutant backbone coordinates starting from the wild-type structure.
pub fn langevin_sample(
    complex: &Complex,
    muts: &MutationSet,
    ref_model: &EnergyModel<f64>,
    config: &LangevinConfig,
) -> Result<SampledStructure, SamplerError> {
    let mutant = apply_mutation_set(complex, muts)?;
    let neigh = select_neighborhood(complex, muts, config.k)?.with_sequence_of(&mutant);
    sample_neighborhood(&neigh, ref_model, config)
}

pub fn sample_neighborhood(neigh: &Neighborhood, ref_model: &EnergyModel<f64>, config: &LangevinConfig) -> Result<SampledStructure, SamplerError> {
    let movable = neigh.site_atom_mask();
    let trajectory = langevin(&neigh.coords, &movable, |x| energy_gradient(ref_model, neigh, x), config)?;
    Ok(SampledStructure { neigh: neigh.clone(), coords: trajectory.last().to_vec(), trajectory })
}

/// Trajectory as CSV rows `step,residue,atom,x,y,z`.
pub fn trajectory_csv(neigh: &Neighborhood, traj: &Trajectory) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "residue", "atom", "x", "y", "z"]).expect("in-memory write");
    for (t, snap) in traj.snapshots.iter().enumerate() {
        for (i, r) in neigh.residues.iter().enumerate() {
            for a in BackboneAtom::ALL {
                let p = snap[i * 4 + a.slot()];
                w.write_record([t.to_string(), r.id.to_string(), a.name().to_string(), p[0].to_string(), p[1].to_string(), p[2].to_string()])
                    .expect("in-memory write");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyConfig;
    use crate::geometry::RigidTransform;
    use crate::rng::seeded;
    use crate::synthetic;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_schedule(0, 10, 0.001), 0.001);
        assert!(cosine_schedule(10, 10, 0.001).abs() < 1e-18);
        assert!((cosine_schedule(5, 10, 0.001) - 0.0005).abs() < 1e-18);
    }

    #[test]
    fn zero_score_without_noise_is_identity() {
        let x0 = vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let cfg = LangevinConfig { steps: 1, eta0: 0.0, ..Default::default() };
        let t = langevin::<SamplerError>(&x0, &[true, true], |x| Ok(vec![[0.0; 3]; x.len()]), &cfg).unwrap();
        assert_eq!(t.last(), &x0[..]);
        assert_eq!(t.snapshots.len(), 2);
    }

    fn fixture() -> (Complex, MutationSet, EnergyModel<f64>) {
        let c = synthetic::two_chain_complex("S", 4, 4, 5.5, 1);
        let m = synthetic::random_mutations(&c, 1, &mut seeded(2));
        let model = EnergyModel::init(EnergyConfig { d_embed: 8, hidden: 12, n_rbf: 8, rbf_max: 12.0 }, &mut seeded(3));
        (c, m, model)
    }

    #[test]
    fn only_site_atoms_move_and_runs_repeat() {
        let (c, m, model) = fixture();
        let cfg = LangevinConfig { k: 4, ..Default::default() };
        let s = langevin_sample(&c, &m, &model, &cfg).unwrap();
        let mask = s.neigh.site_atom_mask();
        for ((a, b), movable) in s.neigh.coords.iter().zip(&s.coords).zip(&mask) {
            if *movable {
                assert_ne!(a, b);
            } else {
                assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
            }
        }
        let again = langevin_sample(&c, &m, &model, &cfg).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.trajectory.snapshots.len(), cfg.steps + 1);
    }

    #[test]
    fn noiseless_small_steps_descend_energy() {
        let (c, m, model) = fixture();
        let cfg = LangevinConfig { k: 4, alpha0: 1e-5, eta0: 0.0, steps: 20, ..Default::default() };
        let s = langevin_sample(&c, &m, &model, &cfg).unwrap();
        let (aa, groups) = (s.neigh.amino_acids(), s.neigh.groups());
        let energies: Vec<f64> = s.trajectory.snapshots.iter().map(|x| model.energy(&aa, &groups, x).unwrap()).collect();
        for w in energies.windows(2) {
            assert!(w[1] <= w[0], "{energies:?}");
        }
    }

    #[test]
    fn sampling_commutes_with_rigid_motion() {
        let (c, m, model) = fixture();
        let cfg = LangevinConfig { k: 4, alpha0: 0.01, eta0: 0.05, ..Default::default() };
        let neigh = select_neighborhood(&c, &m, cfg.k).unwrap();
        let movable = neigh.site_atom_mask();
        let mut rng = seeded(9);
        let draws: Vec<Vec<Point>> = (0..=cfg.steps).map(|_| normal_points(&mut rng, neigh.n_atoms())).collect();
        let t = RigidTransform::random(&mut seeded(10), 10.0);
        let base = langevin_with_noise(&neigh.coords, &movable, |x| energy_gradient(&model, &neigh, x), |s| draws[s].clone(), &cfg).unwrap();
        let moved = langevin_with_noise(
            &t.apply_all(&neigh.coords),
            &movable,
            |x| energy_gradient(&model, &neigh, x),
            |s| draws[s].iter().map(|e| t.rotate(e)).collect(),
            &cfg,
        )
        .unwrap();
        for (a, b) in base.last().iter().zip(moved.last()) {
            let ta = t.apply(a);
            for k in 0..3 {
                assert!((ta[k] - b[k]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn trajectory_dump_has_one_row_per_atom_and_step() {
        let (c, m, model) = fixture();
        let cfg = LangevinConfig { k: 2, steps: 3, ..Default::default() };
        let s = langevin_sample(&c, &m, &model, &cfg).unwrap();
        let text = trajectory_csv(&s.neigh, &s.trajectory);
        assert_eq!(text.lines().count(), 1 + 4 * s.neigh.n_atoms());
    }
}
