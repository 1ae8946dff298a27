//! ΔΔG prediction: sequence log-odds from an inverse-folding provider plus an
//! energy correction on a sampled mutant structure,
//! `ΔΔĜ = k_BT · ΔΔG_BA/k_BT − (s · ΔΔE + b)`.

mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{EnergyError, EnergyModel};
use crate::geometry::{GeometryError, Neighborhood};
use crate::ingest::{apply_mutation_set, AminoAcid, Complex, Group, IngestError, MutationSet, Point};
use crate::net::NetError;
use crate::rng::seeded;
use crate::sampler::{sample_neighborhood, LangevinConfig, SamplerError};
use crate::seqmodel::{joint_site_logprob, unbound_logprob, DecodingPlan, LogProbProvider, SeqModelError};

pub use train::{
    prepare_record, record_loss_and_grad, train, DdgRecord, EpochLog, PreparedRecord, RecordLoss, TrainConfig,
    TrainOutcome, TrainState,
};

/// Distance the binder group is moved away for the separated unbound state.
pub const SEPARATION: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum DdgError {
    #[error("degeneracy {name} must be positive, got {value}")]
    NonPositiveOmega { name: &'static str, value: f64 },
    #[error("training diverged at step {step}")]
    Diverged { step: usize, last_good: Box<TrainState> },
    #[error("no training records")]
    NoRecords,
    #[error("sample layout does not match the neighborhood")]
    SampleLayout,
    #[error(transparent)]
    SeqModel(#[from] SeqModelError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Learnable combination constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdgHead {
    /// `k_BT = exp(log_kbt)` keeps the temperature factor positive.
    pub log_kbt: f64,
    pub s: f64,
    pub b: f64,
    /// Weight of the KL term in the training loss; not trained.
    pub beta_kl: f64,
}

impl Default for DdgHead {
    fn default() -> Self {
        Self { log_kbt: 0.0, s: 1.0, b: 0.0, beta_kl: 0.001 }
    }
}

impl DdgHead {
    pub fn kbt(&self) -> f64 {
        self.log_kbt.exp()
    }

    /// `k_BT · ba_raw − (s · dde + b)` where `ba_raw` is the log-odds term without `k_BT`.
    pub fn combine(&self, ba_raw: f64, dde: f64) -> f64 {
        self.kbt() * ba_raw - (self.s * dde + self.b)
    }
}

/// The four joint log-probabilities at the mutation sites.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BaTerms {
    pub bound_mut: f64,
    pub unbound_mut: f64,
    pub bound_wt: f64,
    pub unbound_wt: f64,
}

impl BaTerms {
    /// `(L_b^mut − L_u^mut) − (L_b^wt − L_u^wt)`.
    pub fn log_odds(&self) -> f64 {
        (self.bound_mut - self.unbound_mut) - (self.bound_wt - self.unbound_wt)
    }

    /// ΔΔG_BA with unit `k_BT`.
    pub fn raw(&self) -> f64 {
        -self.log_odds()
    }
}

/// `−k_BT · log_odds`.
pub fn ddg_ba_from_terms(terms: &BaTerms, kbt: f64) -> f64 {
    -kbt * terms.log_odds()
}

/// Log-probability terms of a record. The wild-type complex supplies the
/// structure and the sequence outside the sites for all four terms.
pub fn ba_terms(
    provider: &dyn LogProbProvider,
    complex: &Complex,
    muts: &MutationSet,
    plan: &DecodingPlan,
) -> Result<BaTerms, DdgError> {
    let sites = muts.sites();
    let mt: Vec<AminoAcid> = muts.iter().map(|m| m.mt).collect();
    let wt: Vec<AminoAcid> = muts.iter().map(|m| m.wt).collect();
    Ok(BaTerms {
        bound_mut: joint_site_logprob(provider, complex, &sites, &mt, plan)?,
        unbound_mut: unbound_logprob(provider, complex, &sites, &mt, plan)?,
        bound_wt: joint_site_logprob(provider, complex, &sites, &wt, plan)?,
        unbound_wt: unbound_logprob(provider, complex, &sites, &wt, plan)?,
    })
}

pub fn ddg_ba(
    provider: &dyn LogProbProvider,
    complex: &Complex,
    muts: &MutationSet,
    head: &DdgHead,
    plan: &DecodingPlan,
) -> Result<f64, DdgError> {
    Ok(ddg_ba_from_terms(&ba_terms(provider, complex, muts, plan)?, head.kbt()))
}

/// How unbound-state energies are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnboundConvention {
    /// `E(X_u) = 0`: the interaction energy vanishes without a partner.
    #[default]
    Zero,
    /// Evaluate with the binder group translated [`SEPARATION`] A away.
    Separated,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub bound_mut: f64,
    pub unbound_mut: f64,
    pub bound_wt: f64,
    pub unbound_wt: f64,
}

impl EnergyTerms {
    /// `(E_b^mut − E_u^mut) − (E_b^wt − E_u^wt)`.
    pub fn dde(&self) -> f64 {
        (self.bound_mut - self.unbound_mut) - (self.bound_wt - self.unbound_wt)
    }
}

/// Binder atoms shifted along x by [`SEPARATION`].
pub fn separated_coords(groups: &[Group], coords: &[Point]) -> Vec<Point> {
    coords
        .iter()
        .enumerate()
        .map(|(i, p)| if groups[i / 4] == Group::Binder { [p[0] + SEPARATION, p[1], p[2]] } else { *p })
        .collect()
}

/// Energy, or zero when one group is absent from the neighborhood.
fn energy_or_zero(model: &EnergyModel<f64>, aa: &[AminoAcid], groups: &[Group], coords: &[Point]) -> Result<f64, DdgError> {
    if !(groups.contains(&Group::Binder) && groups.contains(&Group::Target)) {
        return Ok(0.0);
    }
    let e = model.energy(aa, groups, coords)?;
    if !e.is_finite() {
        return Err(EnergyError::NonFinite.into());
    }
    Ok(e)
}

/// Energies of the sampled mutant and the wild-type neighborhood.
pub fn energy_terms(model: &EnergyModel<f64>, sample: &RecordSample, convention: UnboundConvention) -> Result<EnergyTerms, DdgError> {
    let groups = sample.neigh.groups();
    let wt_aa = sample.neigh.amino_acids();
    let bound_mut = energy_or_zero(model, &sample.mut_aa, &groups, &sample.mut_coords)?;
    let bound_wt = energy_or_zero(model, &wt_aa, &groups, &sample.wt_coords)?;
    let (unbound_mut, unbound_wt) = match convention {
        UnboundConvention::Zero => (0.0, 0.0),
        UnboundConvention::Separated => (
            energy_or_zero(model, &sample.mut_aa, &groups, &separated_coords(&groups, &sample.mut_coords))?,
            energy_or_zero(model, &wt_aa, &groups, &separated_coords(&groups, &sample.wt_coords))?,
        ),
    };
    Ok(EnergyTerms { bound_mut, unbound_mut, bound_wt, unbound_wt })
}

pub fn dde(model: &EnergyModel<f64>, sample: &RecordSample, convention: UnboundConvention) -> Result<f64, DdgError> {
    Ok(energy_terms(model, sample, convention)?.dde())
}

/// Microstate counts of the four states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyRatios {
    pub omega_b_mut: f64,
    pub omega_u_mut: f64,
    pub omega_b_wt: f64,
    pub omega_u_wt: f64,
}

impl DegeneracyRatios {
    fn check(&self) -> Result<(), DdgError> {
        for (name, value) in [
            ("omega_b_mut", self.omega_b_mut),
            ("omega_u_mut", self.omega_u_mut),
            ("omega_b_wt", self.omega_b_wt),
            ("omega_u_wt", self.omega_u_wt),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(DdgError::NonPositiveOmega { name, value });
            }
        }
        Ok(())
    }

    /// `−k_BT ln(Ω_b^mut Ω_u^wt / (Ω_u^mut Ω_b^wt))`.
    pub fn term(&self, kbt: f64) -> Result<f64, DdgError> {
        self.check()?;
        Ok(-kbt * (self.omega_b_mut.ln() + self.omega_u_wt.ln() - self.omega_u_mut.ln() - self.omega_b_wt.ln()))
    }
}

/// Unreduced three-line form: log-odds, Boltzmann factors and degeneracies.
///
/// The Boltzmann line carries the sign that makes it equal to `−ΔΔE`, so the
/// result reduces to `ΔΔG_BA − ΔΔE` whenever the degeneracy ratios agree.
pub fn ddg_full_form(ba: &BaTerms, energies: &EnergyTerms, ratios: &DegeneracyRatios, kbt: f64) -> Result<f64, DdgError> {
    let beta = 1.0 / kbt;
    let log_odds_line = -kbt * ba.log_odds();
    let ln_boltzmann =
        -beta * energies.bound_mut - beta * energies.unbound_wt + beta * energies.unbound_mut + beta * energies.bound_wt;
    let energy_line = kbt * ln_boltzmann;
    Ok(log_odds_line + energy_line + ratios.term(kbt)?)
}

/// Coordinates entering ΔΔE for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSample {
    /// Neighborhood with the wild-type sequence and crystal coordinates.
    pub neigh: Neighborhood,
    /// Neighborhood sequence after mutation.
    pub mut_aa: Vec<AminoAcid>,
    pub mut_coords: Vec<Point>,
    pub wt_coords: Vec<Point>,
}

impl RecordSample {
    /// Sample of the reverse mutation (mutant taken as wild type): sequences and
    /// coordinate sets swap roles.
    pub fn reversed(&self) -> RecordSample {
        let mut neigh = self.neigh.clone();
        for (r, aa) in neigh.residues.iter_mut().zip(&self.mut_aa) {
            r.aa = *aa;
        }
        neigh.coords = self.mut_coords.clone();
        RecordSample { neigh, mut_aa: self.neigh.amino_acids(), mut_coords: self.wt_coords.clone(), wt_coords: self.mut_coords.clone() }
    }
}

/// Samples the mutant neighborhood with the frozen reference model.
pub fn sample_record(
    complex: &Complex,
    muts: &MutationSet,
    reference: &EnergyModel<f64>,
    langevin: &LangevinConfig,
) -> Result<RecordSample, DdgError> {
    let mutant = apply_mutation_set(complex, muts)?;
    let neigh = crate::geometry::select_neighborhood(complex, muts, langevin.k)?;
    let mut_neigh = neigh.with_sequence_of(&mutant);
    let mut_coords = if muts.is_empty() { neigh.coords.clone() } else { sample_neighborhood(&mut_neigh, reference, langevin)?.coords };
    Ok(RecordSample { mut_aa: mut_neigh.amino_acids(), mut_coords, wt_coords: neigh.coords.clone(), neigh })
}

/// Prediction-time settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdgConfig {
    pub langevin: LangevinConfig,
    pub unbound: UnboundConvention,
    /// Seed of the decoding order.
    pub order_seed: u64,
}

impl Default for DdgConfig {
    fn default() -> Self {
        Self { langevin: LangevinConfig::default(), unbound: UnboundConvention::Zero, order_seed: 0 }
    }
}

/// Seeded decoding order for a record.
pub fn decoding_plan(muts: &MutationSet, config: &DdgConfig) -> DecodingPlan {
    DecodingPlan::random(&muts.sites(), &mut seeded(config.order_seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdgPrediction {
    pub ddg_hat: f64,
    /// `k_BT`-scaled sequence term.
    pub ddg_ba: f64,
    pub dde: f64,
    pub ba_terms: BaTerms,
    pub energy_terms: EnergyTerms,
    /// Every site keeps its wild-type residue.
    pub degenerate: bool,
    pub sample: RecordSample,
}

/// Prediction from an existing sample.
#[allow(clippy::too_many_arguments)]
pub fn predict_with_sample(
    complex: &Complex,
    muts: &MutationSet,
    provider: &dyn LogProbProvider,
    model: &EnergyModel<f64>,
    head: &DdgHead,
    sample: RecordSample,
    plan: &DecodingPlan,
    convention: UnboundConvention,
) -> Result<DdgPrediction, DdgError> {
    if sample.mut_coords.len() != sample.neigh.n_atoms() || sample.wt_coords.len() != sample.neigh.n_atoms() {
        return Err(DdgError::SampleLayout);
    }
    let ba = ba_terms(provider, complex, muts, plan)?;
    let energy_terms = energy_terms(model, &sample, convention)?;
    let dde = energy_terms.dde();
    Ok(DdgPrediction {
        ddg_hat: head.combine(ba.raw(), dde),
        ddg_ba: ddg_ba_from_terms(&ba, head.kbt()),
        dde,
        ba_terms: ba,
        energy_terms,
        degenerate: muts.is_degenerate(),
        sample,
    })
}

/// Samples with `reference`, scores with `model`, combines with `head`.
pub fn predict(
    complex: &Complex,
    muts: &MutationSet,
    provider: &dyn LogProbProvider,
    reference: &EnergyModel<f64>,
    model: &EnergyModel<f64>,
    head: &DdgHead,
    config: &DdgConfig,
) -> Result<DdgPrediction, DdgError> {
    let sample = sample_record(complex, muts, reference, &config.langevin)?;
    predict_with_sample(complex, muts, provider, model, head, sample, &decoding_plan(muts, config), config.unbound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyConfig;
    use crate::ingest::Mutation;
    use crate::rng::seeded;
    use crate::seqmodel::{ToyConfig, ToyProvider};
    use crate::synthetic;

    fn small_energy(seed: u64) -> EnergyModel<f64> {
        EnergyModel::init(EnergyConfig { d_embed: 8, hidden: 12, n_rbf: 8, rbf_max: 12.0 }, &mut seeded(seed))
    }

    fn toy(seed: u64) -> ToyProvider {
        ToyProvider::init(ToyConfig { init_scale: 1.0, n_rbf: 4, hidden: 8, k: 6, ..Default::default() }, &mut seeded(seed))
    }

    fn fixture() -> (Complex, MutationSet) {
        let c = synthetic::two_chain_complex("D", 5, 5, 5.5, 3);
        let m = synthetic::random_mutations(&c, 2, &mut seeded(4));
        (c, m)
    }

    #[test]
    fn ba_hand_example() {
        let t = BaTerms { bound_mut: -1.0, unbound_mut: -2.0, bound_wt: -3.0, unbound_wt: -3.5 };
        assert_eq!(ddg_ba_from_terms(&t, 1.0), -0.5);
    }

    #[test]
    fn dde_hand_examples() {
        let e = EnergyTerms { bound_mut: 5.0, unbound_mut: 1.0, bound_wt: 4.0, unbound_wt: 2.0 };
        assert_eq!(e.dde(), 2.0);
        let z = EnergyTerms { bound_mut: 3.0, bound_wt: 1.0, ..Default::default() };
        assert_eq!(z.dde(), 2.0);
    }

    #[test]
    fn combiner_formula() {
        let head = DdgHead { log_kbt: 0.0, s: 1.0, b: 0.0, beta_kl: 0.0 };
        assert_eq!(head.combine(2.0, 0.5), 1.5);
    }

    #[test]
    fn degenerate_set_has_zero_log_odds() {
        let (c, _) = fixture();
        let r = c.residues().nth(2).unwrap();
        let muts = MutationSet::new(vec![Mutation::new(r.aa, r.id, r.aa)]);
        let p = toy(1);
        let plan = DecodingPlan::in_order(&muts.sites());
        assert_eq!(ddg_ba(&p, &c, &muts, &DdgHead::default(), &plan).unwrap(), 0.0);
    }

    #[test]
    fn equal_bound_and_unbound_conditionals_cancel() {
        struct Flat;
        impl LogProbProvider for Flat {
            fn site_logprobs(&self, q: &crate::seqmodel::SiteQuery<'_>) -> Result<[f64; 20], SeqModelError> {
                let z: Vec<f64> = (0..20).map(|k| (k as f64 + q.site.seq as f64).sin()).collect();
                Ok(crate::net::log_softmax(&z).try_into().unwrap())
            }
        }
        let (c, m) = fixture();
        assert_eq!(ddg_ba(&Flat, &c, &m, &DdgHead::default(), &DecodingPlan::in_order(&m.sites())).unwrap(), 0.0);
    }

    #[test]
    fn empty_set_predicts_minus_b() {
        let (c, _) = fixture();
        let head = DdgHead { b: 0.7, ..Default::default() };
        let e = small_energy(1);
        let p = predict(&c, &MutationSet::default(), &toy(1), &e, &e, &head, &DdgConfig::default()).unwrap();
        assert_eq!((p.ddg_ba, p.dde), (0.0, 0.0));
        assert_eq!(p.ddg_hat, -0.7);
    }

    #[test]
    fn identical_sample_and_sequence_gives_zero_dde() {
        let (c, m) = fixture();
        let neigh = crate::geometry::select_neighborhood(&c, &m, 4).unwrap();
        let sample = RecordSample { mut_aa: neigh.amino_acids(), mut_coords: neigh.coords.clone(), wt_coords: neigh.coords.clone(), neigh };
        for conv in [UnboundConvention::Zero, UnboundConvention::Separated] {
            assert_eq!(dde(&small_energy(2), &sample, conv).unwrap(), 0.0);
        }
    }

    #[test]
    fn separated_convention_gives_four_nonzero_terms() {
        let (c, m) = fixture();
        let e = small_energy(5);
        let s = sample_record(&c, &m, &e, &LangevinConfig { k: 4, ..Default::default() }).unwrap();
        let t = energy_terms(&e, &s, UnboundConvention::Separated).unwrap();
        assert!(t.unbound_mut != 0.0 && t.unbound_wt != 0.0);
        let z = energy_terms(&e, &s, UnboundConvention::Zero).unwrap();
        assert_eq!(z.dde(), z.bound_mut - z.bound_wt);
    }

    #[test]
    fn full_form_reduces_and_detects_violations() {
        let ba = BaTerms { bound_mut: -1.2, unbound_mut: -2.0, bound_wt: -0.4, unbound_wt: -3.1 };
        let e = EnergyTerms { bound_mut: 0.3, unbound_mut: -0.2, bound_wt: 1.1, unbound_wt: 0.5 };
        let kbt = 0.6;
        let reduced = kbt * ba.raw() - e.dde();
        let ones = DegeneracyRatios { omega_b_mut: 1.0, omega_u_mut: 1.0, omega_b_wt: 1.0, omega_u_wt: 1.0 };
        assert_eq!(ones.term(kbt).unwrap(), 0.0);
        assert!((ddg_full_form(&ba, &e, &ones, kbt).unwrap() - reduced).abs() < 1e-12);
        let doubled = DegeneracyRatios { omega_b_mut: 6.0, omega_u_mut: 1.5, omega_b_wt: 4.0, omega_u_wt: 2.0 };
        let shift = ddg_full_form(&ba, &e, &doubled, kbt).unwrap() - reduced;
        assert!((shift + kbt * 2f64.ln()).abs() < 1e-12);
        let bad = DegeneracyRatios { omega_b_mut: 0.0, ..ones };
        assert!(matches!(ddg_full_form(&ba, &e, &bad, kbt), Err(DdgError::NonPositiveOmega { .. })));
    }

    #[test]
    fn swapping_wild_type_and_mutant_negates_prediction() {
        let (c, m) = fixture();
        let (reference, model, provider) = (small_energy(7), small_energy(8), toy(9));
        let head = DdgHead { log_kbt: 0.3, s: 1.7, b: 0.0, beta_kl: 0.0 };
        let cfg = DdgConfig { langevin: LangevinConfig { k: 4, ..Default::default() }, ..Default::default() };
        let fwd = predict(&c, &m, &provider, &reference, &model, &head, &cfg).unwrap();
        let mutant = apply_mutation_set(&c, &m).unwrap();
        let rev_muts = m.reversed();
        let rev = predict_with_sample(
            &mutant,
            &rev_muts,
            &provider,
            &model,
            &head,
            fwd.sample.reversed(),
            &decoding_plan(&rev_muts, &cfg),
            cfg.unbound,
        )
        .unwrap();
        assert_eq!(rev.ddg_ba, -fwd.ddg_ba);
        assert!((rev.ddg_hat + fwd.ddg_hat).abs() <= 1e-10);
    }

    #[test]
    fn relabeling_groups_keeps_ba() {
        let (c, m) = fixture();
        let p = toy(11);
        let swapped = Complex::new(c.pdb_id.clone(), c.chains.clone(), c.target_group.clone(), c.binder_group.clone()).unwrap();
        let plan = DecodingPlan::in_order(&m.sites());
        let a = ddg_ba(&p, &c, &m, &DdgHead::default(), &plan).unwrap();
        let b = ddg_ba(&p, &swapped, &m, &DdgHead::default(), &plan).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}
