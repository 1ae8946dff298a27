//! Learned energy `E(X)` of a binder-target neighborhood.
//!
//! Each residue gets a table embedding refined by a feed-forward encoder over
//! its invariant distance features. Binder rows pass through `MLP_bnd`, target
//! rows through `MLP_tgt`, and the energy is the sum of all binder-target dot
//! products `sum_ij <u_i, v_j>`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{residue_features, residue_features_backward, FeatureLayout, GeometryError, Neighborhood, RadialBasis};
use crate::ingest::{AminoAcid, Complex, Group, Point, N_AMINO_ACIDS};
use crate::net::{join, Mlp, MlpRecord, NetError, Params, Tensor};
use crate::rng::Rng;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("neighborhood has no {0:?} residues; the interaction energy needs both groups")]
    MissingGroup(Group),
    #[error("coordinate layout: expected {expected} atoms, got {got}")]
    Layout { expected: usize, got: usize },
    #[error("non-finite energy")]
    NonFinite,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyConfig {
    pub d_embed: usize,
    pub hidden: usize,
    pub n_rbf: usize,
    pub rbf_max: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self { d_embed: 32, hidden: 64, n_rbf: 16, rbf_max: 20.0 }
    }
}

impl EnergyConfig {
    pub fn feature_dim(&self) -> usize {
        FeatureLayout { n_rbf: self.n_rbf }.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel<T> {
    pub config: EnergyConfig,
    /// `20 x d_embed` residue-type table.
    pub embed: Tensor<T>,
    /// Feature rows to embedding corrections.
    pub encoder: Mlp<T>,
    pub mlp_bnd: Mlp<T>,
    pub mlp_tgt: Mlp<T>,
    /// Constant added to the energy; not trained.
    pub offset: T,
}

/// Energy with gradients from one reverse pass.
#[derive(Debug, Clone)]
pub struct EnergyGrad<T> {
    pub energy: T,
    /// dE/dX in the neighborhood layout.
    pub coords: Vec<[T; 3]>,
    /// dE/dθ, same structure as the model.
    pub params: EnergyModel<T>,
}

struct Pass<T> {
    energy: T,
    enc: Vec<MlpRecord<T>>,
    top: Vec<MlpRecord<T>>,
    /// sum of binder outputs and of target outputs
    u_sum: Vec<T>,
    v_sum: Vec<T>,
}

impl<T: Real> EnergyModel<T> {
    pub fn init(config: EnergyConfig, rng: &mut Rng) -> Self {
        let d = config.d_embed;
        Self {
            config,
            embed: Tensor::uniform(&[N_AMINO_ACIDS, d], 1.0 / (d as f64).sqrt(), rng),
            encoder: Mlp::init(config.feature_dim(), config.hidden, d, rng),
            mlp_bnd: Mlp::init(d, config.hidden, d, rng),
            mlp_tgt: Mlp::init(d, config.hidden, d, rng),
            offset: T::zero(),
        }
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U + Copy) -> EnergyModel<U> {
        EnergyModel {
            config: self.config,
            embed: self.embed.map(f),
            encoder: self.encoder.map(f),
            mlp_bnd: self.mlp_bnd.map(f),
            mlp_tgt: self.mlp_tgt.map(f),
            offset: f(self.offset),
        }
    }

    pub fn rbf(&self) -> RadialBasis<T> {
        RadialBasis::uniform(self.config.n_rbf, self.config.rbf_max)
    }

    /// Per-residue embeddings `H` from precomputed feature rows.
    pub fn embed_features(&self, aa: &[AminoAcid], feats: &[T]) -> Result<Vec<Vec<T>>, EnergyError> {
        let dim = self.config.feature_dim();
        check_features(aa.len(), dim, feats.len())?;
        aa.iter()
            .enumerate()
            .map(|(i, a)| {
                let corr = self.encoder.forward(&feats[i * dim..(i + 1) * dim])?;
                Ok(self.embed.row(a.zero_based()).iter().zip(&corr).map(|(&e, &c)| e + c).collect())
            })
            .collect()
    }

    pub fn features(&self, groups: &[Group], coords: &[[T; 3]]) -> Result<Vec<T>, EnergyError> {
        if coords.len() != groups.len() * 4 {
            return Err(EnergyError::Layout { expected: groups.len() * 4, got: coords.len() });
        }
        Ok(residue_features(coords, groups, &self.rbf()))
    }

    /// `sum_ij <MLP_bnd(h_i), MLP_tgt(h_j)>` over binder rows `i` and target rows `j`.
    pub fn interaction_energy(&self, h_bnd: &[Vec<T>], h_tgt: &[Vec<T>]) -> Result<T, EnergyError> {
        if h_bnd.is_empty() {
            return Err(EnergyError::MissingGroup(Group::Binder));
        }
        if h_tgt.is_empty() {
            return Err(EnergyError::MissingGroup(Group::Target));
        }
        let u = h_bnd.iter().map(|h| self.mlp_bnd.forward(h)).collect::<Result<Vec<_>, _>>()?;
        let v = h_tgt.iter().map(|h| self.mlp_tgt.forward(h)).collect::<Result<Vec<_>, _>>()?;
        let mut e = T::zero();
        for ui in &u {
            for vj in &v {
                e += dot(ui, vj);
            }
        }
        Ok(e)
    }

    fn pass(&self, aa: &[AminoAcid], groups: &[Group], feats: &[T]) -> Result<Pass<T>, EnergyError> {
        let dim = self.config.feature_dim();
        check_features(aa.len(), dim, feats.len())?;
        if !groups.contains(&Group::Binder) {
            return Err(EnergyError::MissingGroup(Group::Binder));
        }
        if !groups.contains(&Group::Target) {
            return Err(EnergyError::MissingGroup(Group::Target));
        }
        let d = self.config.d_embed;
        let mut enc = Vec::with_capacity(aa.len());
        let mut top = Vec::with_capacity(aa.len());
        let mut u_sum = vec![T::zero(); d];
        let mut v_sum = vec![T::zero(); d];
        for (i, a) in aa.iter().enumerate() {
            let rec = self.encoder.forward_record(&feats[i * dim..(i + 1) * dim])?;
            let h: Vec<T> = self.embed.row(a.zero_based()).iter().zip(&rec.output).map(|(&e, &c)| e + c).collect();
            let (mlp, acc) = match groups[i] {
                Group::Binder => (&self.mlp_bnd, &mut u_sum),
                Group::Target => (&self.mlp_tgt, &mut v_sum),
            };
            let out = mlp.forward_record(&h)?;
            for (s, &o) in acc.iter_mut().zip(&out.output) {
                *s += o;
            }
            enc.push(rec);
            top.push(out);
        }
        let energy = dot(&u_sum, &v_sum) + self.offset;
        Ok(Pass { energy, enc, top, u_sum, v_sum })
    }

    /// Energy from precomputed feature rows.
    pub fn energy_from_features(&self, aa: &[AminoAcid], groups: &[Group], feats: &[T]) -> Result<T, EnergyError> {
        Ok(self.pass(aa, groups, feats)?.energy)
    }

    pub fn energy(&self, aa: &[AminoAcid], groups: &[Group], coords: &[[T; 3]]) -> Result<T, EnergyError> {
        let feats = self.features(groups, coords)?;
        self.energy_from_features(aa, groups, &feats)
    }

    /// Energy, feature-row gradient and parameter gradient.
    pub fn backprop_features(
        &self,
        aa: &[AminoAcid],
        groups: &[Group],
        feats: &[T],
    ) -> Result<(T, Vec<T>, EnergyModel<T>), EnergyError> {
        let pass = self.pass(aa, groups, feats)?;
        let mut grad = crate::net::zero_like(self);
        grad.offset = T::zero();
        let dim = self.config.feature_dim();
        let mut dfeat = vec![T::zero(); feats.len()];
        for i in 0..aa.len() {
            // dE/du_i = sum_j v_j, dE/dv_j = sum_i u_i
            let (mlp, gmlp, upstream) = match groups[i] {
                Group::Binder => (&self.mlp_bnd, &mut grad.mlp_bnd, &pass.v_sum),
                Group::Target => (&self.mlp_tgt, &mut grad.mlp_tgt, &pass.u_sum),
            };
            let dh = mlp.backward(&pass.top[i], upstream, gmlp);
            for (g, &x) in grad.embed.row_mut(aa[i].zero_based()).iter_mut().zip(&dh) {
                *g += x;
            }
            let df = self.encoder.backward(&pass.enc[i], &dh, &mut grad.encoder);
            dfeat[i * dim..(i + 1) * dim].copy_from_slice(&df);
        }
        Ok((pass.energy, dfeat, grad))
    }

    /// Energy, coordinate gradient and parameter gradient in one reverse pass.
    pub fn energy_and_grads(&self, aa: &[AminoAcid], groups: &[Group], coords: &[[T; 3]]) -> Result<EnergyGrad<T>, EnergyError> {
        let feats = self.features(groups, coords)?;
        let (energy, dfeat, params) = self.backprop_features(aa, groups, &feats)?;
        let coords = residue_features_backward(coords, groups, &self.rbf(), &dfeat);
        Ok(EnergyGrad { energy, coords, params })
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn check_features(n: usize, dim: usize, len: usize) -> Result<(), EnergyError> {
    if len != n * dim {
        return Err(NetError::Dimension { what: "feature rows", expected: n * dim, got: len }.into());
    }
    Ok(())
}

impl<T: Real> Params<T> for EnergyModel<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "embed"), &self.embed);
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.mlp_bnd.visit(&join(prefix, "mlp_bnd"), f);
        self.mlp_tgt.visit(&join(prefix, "mlp_tgt"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<T>)) {
        f(&mut self.embed);
        self.encoder.visit_mut(f);
        self.mlp_bnd.visit_mut(f);
        self.mlp_tgt.visit_mut(f);
    }
}

fn sequence(complex: &Complex, neigh: &Neighborhood) -> (Vec<AminoAcid>, Vec<Group>) {
    (neigh.with_sequence_of(complex).amino_acids(), neigh.groups())
}

fn layout<'a>(neigh: &'a Neighborhood, coords: Option<&'a [Point]>) -> Result<&'a [Point], EnergyError> {
    let c = coords.unwrap_or(&neigh.coords);
    if c.len() != neigh.n_atoms() {
        return Err(EnergyError::Layout { expected: neigh.n_atoms(), got: c.len() });
    }
    Ok(c)
}

/// Embeddings of the neighborhood residues, with identities read from `complex`.
pub fn embed_residues(complex: &Complex, neigh: &Neighborhood, model: &EnergyModel<f64>) -> Result<Vec<Vec<f64>>, EnergyError> {
    let (aa, groups) = sequence(complex, neigh);
    let feats = model.features(&groups, &neigh.coords)?;
    model.embed_features(&aa, &feats)
}

pub fn interaction_energy(h_bnd: &[Vec<f64>], h_tgt: &[Vec<f64>], model: &EnergyModel<f64>) -> Result<f64, EnergyError> {
    model.interaction_energy(h_bnd, h_tgt)
}

/// Energy of the neighborhood; `coords` replaces the neighborhood coordinates when given.
pub fn energy_of(
    complex: &Complex,
    neigh: &Neighborhood,
    coords: Option<&[Point]>,
    model: &EnergyModel<f64>,
) -> Result<f64, EnergyError> {
    let (aa, groups) = sequence(complex, neigh);
    let e = model.energy(&aa, &groups, layout(neigh, coords)?)?;
    if !e.is_finite() {
        return Err(EnergyError::NonFinite);
    }
    Ok(e)
}

/// dE/dX at `coords`.
pub fn score_of(complex: &Complex, neigh: &Neighborhood, coords: &[Point], model: &EnergyModel<f64>) -> Result<Vec<Point>, EnergyError> {
    let (aa, groups) = sequence(complex, neigh);
    Ok(model.energy_and_grads(&aa, &groups, layout(neigh, Some(coords))?)?.coords)
}
