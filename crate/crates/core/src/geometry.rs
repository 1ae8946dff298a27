//! Neighborhood selection around mutation sites and distance-based invariant features.
//!
//! Coordinates in a [`Neighborhood`] are laid out residue-major, four atoms per
//! residue in N, CA, C, O order. Residues are sorted by [`ResidueId`], so the
//! layout does not depend on how the complex stores its chains.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ingest::{AminoAcid, BackboneAtom, Complex, Group, MutationSet, Point, ResidueId};
use crate::rng::{normal, Rng};
use crate::scalar::Real;

/// Backbone atoms per residue in the coordinate layout.
pub const ATOMS_PER_RESIDUE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("site {0} not found in complex")]
    SiteNotFound(ResidueId),
    #[error("site {site} lacks backbone atoms {missing:?}")]
    IncompleteSite { site: ResidueId, missing: Vec<BackboneAtom> },
    #[error("site {0} listed twice")]
    DuplicateSite(ResidueId),
    #[error("chain {0} is not assigned to a group")]
    UngroupedChain(char),
    #[error("coordinate layout mismatch: expected {expected} atoms, got {got}")]
    Layout { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborResidue {
    pub id: ResidueId,
    pub aa: AminoAcid,
    pub group: Group,
    pub is_site: bool,
}

/// Mutation sites plus their nearest context residues, with a flat coordinate view.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    /// Sites in the order they were requested.
    pub sites: Vec<ResidueId>,
    /// Sites and neighbors, sorted by residue id.
    pub residues: Vec<NeighborResidue>,
    /// `4 * residues.len()` positions.
    pub coords: Vec<Point>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }

    pub fn n_atoms(&self) -> usize {
        self.coords.len()
    }

    pub fn neighbor_ids(&self) -> Vec<ResidueId> {
        self.residues.iter().filter(|r| !r.is_site).map(|r| r.id).collect()
    }

    pub fn position(&self, id: &ResidueId) -> Option<usize> {
        self.residues.binary_search_by(|r| r.id.cmp(id)).ok()
    }

    pub fn atom_index(&self, residue: usize, atom: BackboneAtom) -> usize {
        residue * ATOMS_PER_RESIDUE + atom.slot()
    }

    pub fn groups(&self) -> Vec<Group> {
        self.residues.iter().map(|r| r.group).collect()
    }

    pub fn amino_acids(&self) -> Vec<AminoAcid> {
        self.residues.iter().map(|r| r.aa).collect()
    }

    pub fn has_both_groups(&self) -> bool {
        let g = self.groups();
        g.contains(&Group::Binder) && g.contains(&Group::Target)
    }

    /// Per-atom flag: true for backbone atoms of mutation sites.
    pub fn site_atom_mask(&self) -> Vec<bool> {
        self.residues.iter().flat_map(|r| [r.is_site; ATOMS_PER_RESIDUE]).collect()
    }

    /// `(residue, atom, position)` triples in layout order.
    pub fn coordinate_view(&self) -> Vec<(ResidueId, BackboneAtom, Point)> {
        self.residues
            .iter()
            .enumerate()
            .flat_map(|(i, r)| BackboneAtom::ALL.into_iter().map(move |a| (r.id, a, self.coords[i * 4 + a.slot()])))
            .collect()
    }

    /// Same residues and coordinates with amino-acid identities taken from `complex`.
    pub fn with_sequence_of(&self, complex: &Complex) -> Neighborhood {
        let mut out = self.clone();
        for r in &mut out.residues {
            if let Some(res) = complex.residue(&r.id) {
                r.aa = res.aa;
            }
        }
        out
    }

    pub fn with_coords(&self, coords: Vec<Point>) -> Result<Neighborhood, GeometryError> {
        if coords.len() != self.coords.len() {
            return Err(GeometryError::Layout { expected: self.coords.len(), got: coords.len() });
        }
        Ok(Neighborhood { coords, ..self.clone() })
    }

    /// Writes the neighborhood coordinates back into a copy of `complex`.
    pub fn write_into(&self, complex: &Complex, coords: &[Point]) -> Complex {
        let mut out = complex.clone();
        for (i, r) in self.residues.iter().enumerate() {
            if let Some(res) = out.residue_mut(&r.id) {
                for a in BackboneAtom::ALL {
                    res.backbone[a.slot()] = Some(coords[i * 4 + a.slot()]);
                }
            }
        }
        out
    }
}

fn dist2(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Selects the mutation sites of `muts` plus, for each site, its `k` nearest residues by CA distance.
pub fn select_neighborhood(complex: &Complex, muts: &MutationSet, k: usize) -> Result<Neighborhood, GeometryError> {
    select_around(complex, &muts.sites(), k)
}

/// Neighborhood around arbitrary sites. Candidates must have a full backbone;
/// ties in distance break by residue id.
pub fn select_around(complex: &Complex, sites: &[ResidueId], k: usize) -> Result<Neighborhood, GeometryError> {
    let mut site_set = BTreeSet::new();
    for s in sites {
        if !site_set.insert(*s) {
            return Err(GeometryError::DuplicateSite(*s));
        }
        let res = complex.residue(s).ok_or(GeometryError::SiteNotFound(*s))?;
        if !res.has_full_backbone() {
            return Err(GeometryError::IncompleteSite { site: *s, missing: res.missing_atoms() });
        }
    }
    let candidates: Vec<_> = complex.residues().filter(|r| r.has_full_backbone() && !site_set.contains(&r.id)).collect();
    let mut chosen: BTreeSet<ResidueId> = site_set.clone();
    for s in sites {
        let ca = complex.residue(s).and_then(|r| r.ca()).expect("checked above");
        let mut ranked: Vec<(f64, ResidueId)> =
            candidates.iter().map(|r| (dist2(&ca, &r.ca().expect("full backbone")), r.id)).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        chosen.extend(ranked.into_iter().take(k).map(|(_, id)| id));
    }

    let mut residues = Vec::with_capacity(chosen.len());
    let mut coords = Vec::with_capacity(chosen.len() * ATOMS_PER_RESIDUE);
    for id in chosen {
        let res = complex.residue(&id).expect("selected from complex");
        let group = complex.group_of(id.chain).ok_or(GeometryError::UngroupedChain(id.chain))?;
        residues.push(NeighborResidue { id, aa: res.aa, group, is_site: site_set.contains(&id) });
        coords.extend(res.full_backbone().expect("full backbone"));
    }
    Ok(Neighborhood { sites: sites.to_vec(), residues, coords })
}

/// Gaussian radial basis `exp(-(d - mu)^2 / (2 gamma^2))` with distances clamped to `max`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialBasis<T> {
    pub centers: Vec<T>,
    pub gamma: T,
    pub max: T,
}

impl<T: Real> RadialBasis<T> {
    /// Explicit centers; distances clamp at the largest center.
    pub fn new(centers: Vec<T>, gamma: T) -> Self {
        let max = centers.iter().copied().fold(T::zero(), T::max);
        Self { centers, gamma, max }
    }

    /// `n` centers spaced uniformly on `[0, max]`, width `max / n`.
    pub fn uniform(n: usize, max: f64) -> Self {
        assert!(n >= 1 && max > 0.0, "radial basis needs n >= 1 and max > 0");
        let centers = (0..n)
            .map(|m| if n == 1 { T::zero() } else { T::lit(max * m as f64 / (n - 1) as f64) })
            .collect();
        Self { centers, gamma: T::lit(max / n as f64), max: T::lit(max) }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn expand(&self, d: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        self.expand_into(d, &mut out);
        out
    }

    pub fn expand_into(&self, d: T, out: &mut [T]) {
        let d = d.min(self.max);
        let inv = T::one() / (T::lit(2.0) * self.gamma * self.gamma);
        for (o, &mu) in out.iter_mut().zip(&self.centers) {
            let z = d - mu;
            *o = (-(z * z) * inv).exp();
        }
    }

    /// Accumulates `sum_m upstream[m] * dphi_m/dd`; zero beyond the clamp.
    pub fn backward(&self, d: T, upstream: &[T]) -> T {
        if d >= self.max {
            return T::zero();
        }
        let g2 = self.gamma * self.gamma;
        let inv = T::one() / (T::lit(2.0) * g2);
        let mut acc = T::zero();
        for (&u, &mu) in upstream.iter().zip(&self.centers) {
            let z = d - mu;
            acc += u * (-(z * z) * inv).exp() * (-z / g2);
        }
        acc
    }
}

const INTRA_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Column layout of the per-residue feature rows.
///
/// Each row holds RBF expansions of the six intra-residue backbone distances,
/// then for each of the 16 atom pairs `(a of i, b of j)` the RBF expansion
/// summed over all other residues `j`, split into same-group and other-group
/// blocks, then a binder/target one-hot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub n_rbf: usize,
}

impl FeatureLayout {
    pub fn dim(&self) -> usize {
        38 * self.n_rbf + 2
    }

    fn intra(&self, pair: usize) -> usize {
        pair * self.n_rbf
    }

    fn inter(&self, other_group: bool, a: usize, b: usize) -> usize {
        (6 + usize::from(other_group) * 16 + a * 4 + b) * self.n_rbf
    }

    fn group(&self) -> usize {
        38 * self.n_rbf
    }
}

fn norm<T: Real>(a: &[T; 3], b: &[T; 3]) -> (T, [T; 3]) {
    let diff = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    ((diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt(), diff)
}

/// Per-residue invariant feature rows, `n x layout.dim()` row-major.
pub fn residue_features<T: Real>(coords: &[[T; 3]], groups: &[Group], rbf: &RadialBasis<T>) -> Vec<T> {
    let n = groups.len();
    assert_eq!(coords.len(), n * ATOMS_PER_RESIDUE, "coordinate layout");
    let layout = FeatureLayout { n_rbf: rbf.len() };
    let dim = layout.dim();
    let mut out = vec![T::zero(); n * dim];
    let mut buf = vec![T::zero(); rbf.len()];
    for i in 0..n {
        let row = &mut out[i * dim..(i + 1) * dim];
        let atoms = &coords[i * 4..i * 4 + 4];
        for (p, &(a, b)) in INTRA_PAIRS.iter().enumerate() {
            let off = layout.intra(p);
            rbf.expand_into(norm(&atoms[a], &atoms[b]).0, &mut row[off..off + rbf.len()]);
        }
        for j in (0..n).filter(|&j| j != i) {
            let other = groups[j] != groups[i];
            for a in 0..4 {
                for b in 0..4 {
                    rbf.expand_into(norm(&coords[i * 4 + a], &coords[j * 4 + b]).0, &mut buf);
                    let off = layout.inter(other, a, b);
                    for (o, v) in row[off..off + rbf.len()].iter_mut().zip(&buf) {
                        *o += *v;
                    }
                }
            }
        }
        let g = layout.group();
        row[g + usize::from(groups[i] == Group::Target)] = T::one();
    }
    out
}

/// Gradient of `sum(upstream * residue_features(coords))` with respect to `coords`.
pub fn residue_features_backward<T: Real>(
    coords: &[[T; 3]],
    groups: &[Group],
    rbf: &RadialBasis<T>,
    upstream: &[T],
) -> Vec<[T; 3]> {
    let n = groups.len();
    let layout = FeatureLayout { n_rbf: rbf.len() };
    let dim = layout.dim();
    let nr = rbf.len();
    assert_eq!(upstream.len(), n * dim, "upstream layout");
    let mut grad = vec![[T::zero(); 3]; coords.len()];
    let mut push = |ia: usize, ib: usize, g: T, diff: [T; 3], d: T| {
        if g == T::zero() || d <= T::lit(1e-12) {
            return;
        }
        let s = g / d;
        for c in 0..3 {
            grad[ia][c] += s * diff[c];
            grad[ib][c] -= s * diff[c];
        }
    };
    for i in 0..n {
        let row = &upstream[i * dim..(i + 1) * dim];
        for (p, &(a, b)) in INTRA_PAIRS.iter().enumerate() {
            let off = layout.intra(p);
            let (d, diff) = norm(&coords[i * 4 + a], &coords[i * 4 + b]);
            push(i * 4 + a, i * 4 + b, rbf.backward(d, &row[off..off + nr]), diff, d);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let other = groups[j] != groups[i];
            let row_i = &upstream[i * dim..(i + 1) * dim];
            let row_j = &upstream[j * dim..(j + 1) * dim];
            for a in 0..4 {
                for b in 0..4 {
                    let (d, diff) = norm(&coords[i * 4 + a], &coords[j * 4 + b]);
                    let oi = layout.inter(other, a, b);
                    let oj = layout.inter(other, b, a);
                    let g = rbf.backward(d, &row_i[oi..oi + nr]) + rbf.backward(d, &row_j[oj..oj + nr]);
                    push(i * 4 + a, j * 4 + b, g, diff, d);
                }
            }
        }
    }
    grad
}

/// Invariant description of a neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantFeatures {
    pub layout: FeatureLayout,
    /// `n x layout.dim()` per-residue rows.
    pub rows: Vec<f64>,
    /// `n x n x n_rbf` expansion of CA-CA distances.
    pub ca_pairs: Vec<f64>,
    pub aa_onehot: Vec<[f64; 20]>,
    pub groups: Vec<Group>,
}

impl InvariantFeatures {
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.layout.dim();
        &self.rows[i * d..(i + 1) * d]
    }

    /// All numeric content flattened, for invariance comparisons.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.rows.clone();
        v.extend_from_slice(&self.ca_pairs);
        v.extend(self.aa_onehot.iter().flatten());
        v
    }
}

pub fn featurize(neigh: &Neighborhood, n_rbf: usize, rbf_max: f64) -> InvariantFeatures {
    featurize_coords(neigh, &neigh.coords, &RadialBasis::uniform(n_rbf, rbf_max))
}

pub fn featurize_coords(neigh: &Neighborhood, coords: &[Point], rbf: &RadialBasis<f64>) -> InvariantFeatures {
    let groups = neigh.groups();
    let n = groups.len();
    let rows = residue_features(coords, &groups, rbf);
    let mut ca_pairs = vec![0.0; n * n * rbf.len()];
    for i in 0..n {
        for j in 0..n {
            let off = (i * n + j) * rbf.len();
            rbf.expand_into(dist2(&coords[i * 4 + 1], &coords[j * 4 + 1]).sqrt(), &mut ca_pairs[off..off + rbf.len()]);
        }
    }
    let aa_onehot = neigh
        .residues
        .iter()
        .map(|r| {
            let mut h = [0.0; 20];
            h[r.aa.zero_based()] = 1.0;
            h
        })
        .collect();
    InvariantFeatures { layout: FeatureLayout { n_rbf: rbf.len() }, rows, ca_pairs, aa_onehot, groups }
}

/// Proper rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidTransform {
    /// Uniformly random rotation (normalized Gaussian quaternion) and Gaussian translation of scale `shift`.
    pub fn random(rng: &mut Rng, shift: f64) -> Self {
        let mut q = [normal(rng), normal(rng), normal(rng), normal(rng)];
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        q.iter_mut().for_each(|x| *x /= n);
        let [w, x, y, z] = q;
        let rotation = [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ];
        let translation = [shift * normal(rng), shift * normal(rng), shift * normal(rng)];
        Self { rotation, translation }
    }

    pub fn rotate(&self, v: &Point) -> Point {
        let r = &self.rotation;
        [
            r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
            r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
            r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
        ]
    }

    pub fn apply(&self, p: &Point) -> Point {
        let r = self.rotate(p);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }

    pub fn apply_all(&self, pts: &[Point]) -> Vec<Point> {
        pts.iter().map(|p| self.apply(p)).collect()
    }

    /// Transforms every atom of the complex.
    pub fn apply_complex(&self, complex: &Complex) -> Complex {
        let mut out = complex.clone();
        for chain in &mut out.chains {
            for res in &mut chain.residues {
                for p in res.backbone.iter_mut().flatten() {
                    *p = self.apply(p);
                }
            }
        }
        out
    }
}

/// Groups neighborhood residue indices by chain group.
pub fn split_by_group(neigh: &Neighborhood) -> BTreeMap<Group, Vec<usize>> {
    let mut out: BTreeMap<Group, Vec<usize>> = BTreeMap::new();
    for (i, r) in neigh.residues.iter().enumerate() {
        out.entry(r.group).or_default().push(i);
    }
    out
}
