//! Conditional sequence log-probabilities `log p(S | X)` at mutation sites.
//!
//! The joint probability of the site identities is expanded autoregressively
//! along a decoding order: each site is scored with the structure, the fixed
//! sequence context and the sites already decoded visible, while the sites
//! still to be decoded are masked.

mod file;
mod toy;

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::geometry::GeometryError;
use crate::ingest::{AminoAcid, Complex, ComplexKey, Group, ResidueId};
use crate::net::NetError;
use crate::rng::Rng;

pub use file::PrecomputedLogProbs;
pub use toy::{train_toy_provider, ToyConfig, ToyLogRow, ToyProvider, TOY_OUTPUTS};

/// Tolerance on `Σ_a exp(log p(a)) = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Probability floor used inside KL divergences.
pub const KL_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SeqModelError {
    #[error("no log-probabilities for {complex} ({state}) at {site}")]
    Missing { complex: String, state: State, site: ResidueId },
    #[error("log-probabilities for {complex} ({state}) at {site} sum to {total} after exponentiation")]
    Normalization { complex: String, state: State, site: ResidueId, total: f64 },
    #[error("log-probabilities for {complex} ({state}) at {site} cover {found} of 20 amino acids")]
    Coverage { complex: String, state: State, site: ResidueId, found: usize },
    #[error("duplicate log-probability row for {complex} ({state}) at {site}, amino acid {aa}")]
    Duplicate { complex: String, state: State, site: ResidueId, aa: AminoAcid },
    #[error("row {row}, column {column}: {message}")]
    Row { row: usize, column: &'static str, message: String },
    #[error("decoding plan does not match the site set")]
    PlanMismatch,
    #[error("{0} sites but {1} assignments")]
    AssignmentLength(usize, usize),
    #[error("site {0} is not in the complex or has no chain group")]
    UnknownSite(ResidueId),
    #[error("toy provider training diverged at step {0}")]
    Diverged(usize),
    #[error("no training residues")]
    NoTrainingData,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Structural state the conditional is evaluated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum State {
    Bound,
    /// Only the chains of this group are present.
    Unbound(Group),
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Bound => f.write_str("bound"),
            State::Unbound(_) => f.write_str("unbound"),
        }
    }
}

/// One conditional query.
#[derive(Debug, Clone, Copy)]
pub struct SiteQuery<'a> {
    /// Key of the full complex, also for unbound queries.
    pub key: &'a ComplexKey,
    pub state: State,
    /// Structure and sequence visible to the model.
    pub context: &'a Complex,
    pub site: ResidueId,
    /// Sites whose identity is hidden, the queried site included.
    pub masked: &'a BTreeSet<ResidueId>,
}

/// Source of per-site conditionals over the 20 amino acids.
pub trait LogProbProvider: Send + Sync {
    /// Log-probabilities indexed by zero-based amino-acid index.
    fn site_logprobs(&self, query: &SiteQuery<'_>) -> Result<[f64; 20], SeqModelError>;
}

impl<P: LogProbProvider + ?Sized> LogProbProvider for &P {
    fn site_logprobs(&self, query: &SiteQuery<'_>) -> Result<[f64; 20], SeqModelError> {
        (**self).site_logprobs(query)
    }
}

impl<P: LogProbProvider + ?Sized> LogProbProvider for Box<P> {
    fn site_logprobs(&self, query: &SiteQuery<'_>) -> Result<[f64; 20], SeqModelError> {
        (**self).site_logprobs(query)
    }
}

/// Provider chosen at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum SeqProvider {
    File(PrecomputedLogProbs),
    Toy(ToyProvider),
}

impl LogProbProvider for SeqProvider {
    fn site_logprobs(&self, query: &SiteQuery<'_>) -> Result<[f64; 20], SeqModelError> {
        match self {
            SeqProvider::File(p) => p.site_logprobs(query),
            SeqProvider::Toy(p) => p.site_logprobs(query),
        }
    }
}

/// Order in which mutation sites are decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodingPlan {
    order: Vec<ResidueId>,
}

impl DecodingPlan {
    pub fn new(order: Vec<ResidueId>) -> Self {
        Self { order }
    }

    /// Sites decoded in the given order.
    pub fn in_order(sites: &[ResidueId]) -> Self {
        Self { order: sites.to_vec() }
    }

    /// Uniformly random permutation of the sites.
    pub fn random(sites: &[ResidueId], rng: &mut Rng) -> Self {
        let mut order = sites.to_vec();
        order.shuffle(rng);
        Self { order }
    }

    pub fn order(&self) -> &[ResidueId] {
        &self.order
    }

    /// Same relative order over the sites accepted by `keep`.
    pub fn restricted(&self, keep: impl Fn(&ResidueId) -> bool) -> Self {
        Self { order: self.order.iter().copied().filter(|s| keep(s)).collect() }
    }

    /// Errors unless the plan is a permutation of `sites`.
    pub fn check(&self, sites: &[ResidueId]) -> Result<(), SeqModelError> {
        let mut a = self.order.clone();
        let mut b = sites.to_vec();
        a.sort();
        b.sort();
        let distinct = a.windows(2).all(|w| w[0] != w[1]);
        if a != b || !distinct {
            return Err(SeqModelError::PlanMismatch);
        }
        Ok(())
    }
}

fn assignment_of(sites: &[ResidueId], assignments: &[AminoAcid], site: &ResidueId) -> AminoAcid {
    let i = sites.iter().position(|s| s == site).expect("plan checked against sites");
    assignments[i]
}

/// Walks the plan, calling `step(context, site, masked, aa)` for each site and
/// summing the returned terms. Decoded sites are written into the context.
pub fn decode_plan(
    context: &Complex,
    sites: &[ResidueId],
    assignments: &[AminoAcid],
    plan: &DecodingPlan,
    mut step: impl FnMut(&Complex, ResidueId, &BTreeSet<ResidueId>, AminoAcid) -> Result<f64, SeqModelError>,
) -> Result<f64, SeqModelError> {
    if sites.len() != assignments.len() {
        return Err(SeqModelError::AssignmentLength(sites.len(), assignments.len()));
    }
    plan.check(sites)?;
    let mut ctx = context.clone();
    let mut masked: BTreeSet<ResidueId> = sites.iter().copied().collect();
    let mut total = 0.0;
    for site in plan.order() {
        let aa = assignment_of(sites, assignments, site);
        total += step(&ctx, *site, &masked, aa)?;
        ctx.residue_mut(site).ok_or(SeqModelError::UnknownSite(*site))?.aa = aa;
        masked.remove(site);
    }
    Ok(total)
}

/// Splits sites by chain group and calls `f(view, state, sites, assignments, plan)`
/// once per group that has sites, summing the results.
pub fn per_group(
    complex: &Complex,
    sites: &[ResidueId],
    assignments: &[AminoAcid],
    plan: &DecodingPlan,
    mut f: impl FnMut(&Complex, State, &[ResidueId], &[AminoAcid], &DecodingPlan) -> Result<f64, SeqModelError>,
) -> Result<f64, SeqModelError> {
    if sites.len() != assignments.len() {
        return Err(SeqModelError::AssignmentLength(sites.len(), assignments.len()));
    }
    plan.check(sites)?;
    let tagged = sites
        .iter()
        .zip(assignments)
        .map(|(s, a)| complex.group_of(s.chain).ok_or(SeqModelError::UnknownSite(*s)).map(|g| (g, *s, *a)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = 0.0;
    for group in [Group::Binder, Group::Target] {
        let (gs, ga): (Vec<ResidueId>, Vec<AminoAcid>) =
            tagged.iter().filter(|(g, _, _)| *g == group).map(|(_, s, a)| (*s, *a)).unzip();
        if gs.is_empty() {
            continue;
        }
        let view = complex.group_view(group);
        let sub = plan.restricted(|s| gs.contains(s));
        total += f(&view, State::Unbound(group), &gs, &ga, &sub)?;
    }
    Ok(total)
}

/// Chain-rule sum over the plan within one state.
pub fn joint_logprob_in_state(
    provider: &dyn LogProbProvider,
    key: &ComplexKey,
    context: &Complex,
    state: State,
    sites: &[ResidueId],
    assignments: &[AminoAcid],
    plan: &DecodingPlan,
) -> Result<f64, SeqModelError> {
    decode_plan(context, sites, assignments, plan, |ctx, site, masked, aa| {
        let lp = provider.site_logprobs(&SiteQuery { key, state, context: ctx, site, masked })?;
        Ok(lp[aa.zero_based()])
    })
}

/// `log p(S_sites = assignments | X_b)` in the bound complex.
pub fn joint_site_logprob(
    provider: &dyn LogProbProvider,
    complex: &Complex,
    sites: &[ResidueId],
    assignments: &[AminoAcid],
    plan: &DecodingPlan,
) -> Result<f64, SeqModelError> {
    joint_logprob_in_state(provider, &complex.key(), complex, State::Bound, sites, assignments, plan)
}

/// Unbound approximation: per-group joint terms, each with only that group's chains as context.
pub fn unbound_logprob(
    provider: &dyn LogProbProvider,
    complex: &Complex,
    sites: &[ResidueId],
    assignments: &[AminoAcid],
    plan: &DecodingPlan,
) -> Result<f64, SeqModelError> {
    let key = complex.key();
    per_group(complex, sites, assignments, plan, |view, state, gs, ga, sub| {
        joint_logprob_in_state(provider, &key, view, state, gs, ga, sub)
    })
}

/// `Σ_a p(a) (log p(a) - log q(a))` with both arguments as log-probabilities.
///
/// Reference probabilities below [`KL_FLOOR`] are clamped and a warning is logged.
pub fn kl_divergence(log_p: &[f64; 20], log_q: &[f64; 20]) -> f64 {
    let mut kl = 0.0;
    for (lp, lq) in log_p.iter().zip(log_q) {
        let p = lp.exp();
        if p == 0.0 {
            continue;
        }
        let lq = if lq.exp() < KL_FLOOR {
            log::warn!("reference probability {:e} clamped to {KL_FLOOR:e}", lq.exp());
            KL_FLOOR.ln()
        } else {
            *lq
        };
        kl += p * (lp - lq);
    }
    kl.max(0.0)
}

/// Gradient of [`kl_divergence`] with respect to the logits behind `log_p`.
pub fn kl_logit_grad(log_p: &[f64; 20], log_q: &[f64; 20]) -> [f64; 20] {
    let kl = kl_divergence(log_p, log_q);
    let mut g = [0.0; 20];
    for k in 0..20 {
        let lq = log_q[k].max(KL_FLOOR.ln());
        g[k] = log_p[k].exp() * (log_p[k] - lq - kl);
    }
    g
}

/// Summed KL between two providers at the bound-state sites, all sites masked.
pub fn kl_to_reference(
    provider: &dyn LogProbProvider,
    reference: &dyn LogProbProvider,
    complex: &Complex,
    sites: &[ResidueId],
) -> Result<f64, SeqModelError> {
    let key = complex.key();
    let masked: BTreeSet<ResidueId> = sites.iter().copied().collect();
    let mut total = 0.0;
    for site in sites {
        let q = SiteQuery { key: &key, state: State::Bound, context: complex, site: *site, masked: &masked };
        total += kl_divergence(&provider.site_logprobs(&q)?, &reference.site_logprobs(&q)?);
    }
    Ok(total)
}

/// Checks `Σ exp = 1` within [`NORMALIZATION_TOL`]; returns the sum.
pub fn check_normalized(lp: &[f64; 20]) -> Result<f64, f64> {
    let total: f64 = lp.iter().map(|v| v.exp()).sum();
    if (total - 1.0).abs() <= NORMALIZATION_TOL && lp.iter().all(|v| !v.is_nan()) {
        Ok(total)
    } else {
        Err(total)
    }
}
