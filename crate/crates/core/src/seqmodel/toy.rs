//! Small inverse-folding model: per-site invariant features to 20-way logits.
//!
//! Input for site `i` is the radial expansion of its six intra-residue
//! backbone distances, plus `Σ_j rbf(|CA_i - CA_j|) ⊗ onehot(a_j)` over the `k`
//! nearest residues in the context, where masked neighbors use a 21st token.

use std::collections::BTreeSet;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use super::{decode_plan, kl_divergence, kl_logit_grad, per_group, DecodingPlan, LogProbProvider, SeqModelError, SiteQuery, State};
use crate::geometry::{GeometryError, RadialBasis};
use crate::ingest::{AminoAcid, Complex, Group, Point, ResidueId};
use crate::net::{join, log_softmax, Activation, Adam, AdamConfig, DenseLayer, Mlp, Params, Tensor};
use crate::rng::{seeded, Rng};

pub const TOY_OUTPUTS: usize = 20;
const TOKENS: usize = 21;
const MASK_TOKEN: usize = 20;
const INTRA_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub n_rbf: usize,
    pub rbf_max: f64,
    /// Context residues per site.
    pub k: usize,
    pub hidden: usize,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Probability that a context residue's identity is masked during training.
    pub mask_frac: f64,
    /// Scale of the output-layer initialization.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_rbf: 8,
            rbf_max: 16.0,
            k: 16,
            hidden: 64,
            lr: 3e-3,
            steps: 2000,
            batch_size: 16,
            mask_frac: 0.15,
            init_scale: 0.01,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn feature_dim(&self) -> usize {
        (INTRA_PAIRS.len() + TOKENS) * self.n_rbf
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyProvider {
    pub config: ToyConfig,
    pub mlp: Mlp<f64>,
}

impl Params<f64> for ToyProvider {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<f64>)) {
        self.mlp.visit(&join(prefix, "mlp"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<f64>)) {
        self.mlp.visit_mut(f);
    }
}

/// Site geometry independent of masking.
#[derive(Debug, Clone)]
struct SiteEnv {
    intra: Vec<f64>,
    /// `(rbf(d), token)` per context neighbor.
    neighbors: Vec<(Vec<f64>, usize, ResidueId)>,
}

fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl ToyProvider {
    pub fn init(config: ToyConfig, rng: &mut Rng) -> Self {
        let mlp = Mlp {
            l1: DenseLayer::init(config.feature_dim(), config.hidden, rng),
            l2: DenseLayer::init_scaled(config.hidden, TOY_OUTPUTS, config.init_scale, rng),
            act: Activation::Gelu,
        };
        Self { config, mlp }
    }

    fn rbf(&self) -> RadialBasis<f64> {
        RadialBasis::uniform(self.config.n_rbf, self.config.rbf_max)
    }

    fn env(&self, context: &Complex, site: &ResidueId) -> Result<SiteEnv, SeqModelError> {
        let res = context.residue(site).ok_or(GeometryError::SiteNotFound(*site))?;
        let bb = res.full_backbone().ok_or(GeometryError::IncompleteSite { site: *site, missing: res.missing_atoms() })?;
        let rbf = self.rbf();
        let intra = INTRA_PAIRS.iter().flat_map(|&(a, b)| rbf.expand(dist(&bb[a], &bb[b]))).collect();
        let mut ranked: Vec<(f64, ResidueId, usize)> = context
            .residues()
            .filter(|r| r.id != *site && r.has_full_backbone())
            .map(|r| (dist(&bb[1], &r.ca().expect("full backbone")), r.id, r.aa.zero_based()))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let neighbors = ranked.into_iter().take(self.config.k).map(|(d, id, tok)| (rbf.expand(d), tok, id)).collect();
        Ok(SiteEnv { intra, neighbors })
    }

    fn assemble(&self, env: &SiteEnv, masked: impl Fn(usize, &ResidueId) -> bool) -> Vec<f64> {
        let n = self.config.n_rbf;
        let mut f = env.intra.clone();
        f.resize(self.config.feature_dim(), 0.0);
        let off = INTRA_PAIRS.len() * n;
        for (j, (e, tok, id)) in env.neighbors.iter().enumerate() {
            let t = if masked(j, id) { MASK_TOKEN } else { *tok };
            for (slot, v) in f[off + t * n..off + (t + 1) * n].iter_mut().zip(e) {
                *slot += v;
            }
        }
        f
    }

    /// Feature vector of `site` in `context` with the identities in `masked` hidden.
    pub fn features(&self, context: &Complex, site: &ResidueId, masked: &BTreeSet<ResidueId>) -> Result<Vec<f64>, SeqModelError> {
        let env = self.env(context, site)?;
        Ok(self.assemble(&env, |_, id| masked.contains(id)))
    }

    pub fn log_probs_from_features(&self, features: &[f64]) -> Result<[f64; 20], SeqModelError> {
        let z = self.mlp.forward(features)?;
        Ok(log_softmax(&z).try_into().expect("20 outputs"))
    }

    /// Accumulates `∂/∂θ Σ_k dlogits_k z_k` into `grad`.
    pub fn backward_logits(&self, features: &[f64], dlogits: &[f64; 20], grad: &mut ToyProvider) -> Result<(), SeqModelError> {
        let rec = self.mlp.forward_record(features)?;
        self.mlp.backward(&rec, dlogits, &mut grad.mlp);
        Ok(())
    }

    /// Bound-state joint log-probability along `plan`; accumulates `scale · ∇θ` into `grad`.
    pub fn joint_logprob_with_grad(
        &self,
        context: &Complex,
        sites: &[ResidueId],
        assignments: &[AminoAcid],
        plan: &DecodingPlan,
        scale: f64,
        grad: &mut ToyProvider,
    ) -> Result<f64, SeqModelError> {
        decode_plan(context, sites, assignments, plan, |ctx, site, masked, aa| {
            let f = self.features(ctx, &site, masked)?;
            let lp = self.log_probs_from_features(&f)?;
            // d log p_a / d z = e_a - p
            let mut d = lp.map(|v| -scale * v.exp());
            d[aa.zero_based()] += scale;
            self.backward_logits(&f, &d, grad)?;
            Ok(lp[aa.zero_based()])
        })
    }

    /// Unbound counterpart of [`ToyProvider::joint_logprob_with_grad`].
    pub fn unbound_logprob_with_grad(
        &self,
        complex: &Complex,
        sites: &[ResidueId],
        assignments: &[AminoAcid],
        plan: &DecodingPlan,
        scale: f64,
        grad: &mut ToyProvider,
    ) -> Result<f64, SeqModelError> {
        per_group(complex, sites, assignments, plan, |view, _, gs, ga, sub| {
            self.joint_logprob_with_grad(view, gs, ga, sub, scale, grad)
        })
    }

    /// Summed bound-state KL to `reference` at `sites` (all masked); accumulates `scale · ∇θ`.
    pub fn kl_with_grad(
        &self,
        reference: &dyn LogProbProvider,
        complex: &Complex,
        sites: &[ResidueId],
        scale: f64,
        grad: &mut ToyProvider,
    ) -> Result<f64, SeqModelError> {
        let key = complex.key();
        let masked: BTreeSet<ResidueId> = sites.iter().copied().collect();
        let mut total = 0.0;
        for site in sites {
            let f = self.features(complex, site, &masked)?;
            let lp = self.log_probs_from_features(&f)?;
            let q = SiteQuery { key: &key, state: State::Bound, context: complex, site: *site, masked: &masked };
            let lq = reference.site_logprobs(&q)?;
            total += kl_divergence(&lp, &lq);
            if scale != 0.0 {
                let d = kl_logit_grad(&lp, &lq).map(|g| g * scale);
                self.backward_logits(&f, &d, grad)?;
            }
        }
        Ok(total)
    }

    /// Fraction of full-backbone residues whose identity is the argmax, all context visible.
    pub fn accuracy(&self, complexes: &[Complex]) -> Result<f64, SeqModelError> {
        let (mut hit, mut total) = (0usize, 0usize);
        let none = BTreeSet::new();
        for c in complexes {
            for r in c.residues().filter(|r| r.has_full_backbone()) {
                let lp = self.log_probs_from_features(&self.features(c, &r.id, &none)?)?;
                let best = (0..20).max_by(|&a, &b| lp[a].total_cmp(&lp[b])).expect("20 entries");
                hit += usize::from(best == r.aa.zero_based());
                total += 1;
            }
        }
        Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
    }
}

impl LogProbProvider for ToyProvider {
    fn site_logprobs(&self, q: &SiteQuery<'_>) -> Result<[f64; 20], SeqModelError> {
        self.log_probs_from_features(&self.features(q.context, &q.site, q.masked)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyLogRow {
    pub step: usize,
    pub loss: f64,
}

/// Cross-entropy training on every full-backbone residue, in the bound complex
/// and in each group's unbound view, with random context masking.
pub fn train_toy_provider(complexes: &[Complex], config: &ToyConfig) -> Result<(ToyProvider, Vec<ToyLogRow>), SeqModelError> {
    let mut rng = seeded(config.seed);
    let mut model = ToyProvider::init(*config, &mut rng);
    let mut examples: Vec<(SiteEnv, usize)> = Vec::new();
    for c in complexes {
        let views = [c.clone(), c.group_view(Group::Binder), c.group_view(Group::Target)];
        for view in &views {
            for r in view.residues().filter(|r| r.has_full_backbone()) {
                examples.push((model.env(view, &r.id)?, r.aa.zero_based()));
            }
        }
    }
    if config.steps == 0 {
        return Ok((model, Vec::new()));
    }
    if examples.is_empty() {
        return Err(SeqModelError::NoTrainingData);
    }
    let mut theta = crate::net::flatten(&model);
    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..Default::default() }, theta.len());
    let batch = config.batch_size.max(1);
    let mut log = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        let mut grad = crate::net::zero_like(&model);
        let mut loss = 0.0;
        for _ in 0..batch {
            let (env, label) = &examples[rng.random_range(0..examples.len())];
            let mask: Vec<bool> = (0..env.neighbors.len()).map(|_| rng.random::<f64>() < config.mask_frac).collect();
            let f = model.assemble(env, |j, _| mask[j]);
            let lp = model.log_probs_from_features(&f)?;
            loss -= lp[*label] / batch as f64;
            let mut d: [f64; 20] = std::array::from_fn(|k| lp[k].exp() / batch as f64);
            d[*label] -= 1.0 / batch as f64;
            model.backward_logits(&f, &d, &mut grad)?;
        }
        if !loss.is_finite() {
            return Err(SeqModelError::Diverged(step));
        }
        adam.step(&mut theta, &crate::net::flatten(&grad))?;
        crate::net::assign(&mut model, &theta);
        log.push(ToyLogRow { step, loss });
        if step % 500 == 0 {
            log::info!("toy provider step {step} loss {loss:.4}");
        }
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{finite_diff_check, GradCheck};
    use crate::synthetic;

    #[test]
    fn untrained_model_is_near_uniform_and_normalized() {
        let c = synthetic::two_chain_complex("U", 5, 5, 6.0, 1);
        let m = ToyProvider::init(ToyConfig::default(), &mut seeded(2));
        let none = BTreeSet::new();
        for r in c.residues() {
            let lp = m.log_probs_from_features(&m.features(&c, &r.id, &none).unwrap()).unwrap();
            let total: f64 = lp.iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-6);
            for v in lp {
                assert!((v + 20f64.ln()).abs() < 0.2, "{v}");
            }
        }
    }

    #[test]
    fn masking_changes_only_the_token_block() {
        let c = synthetic::two_chain_complex("U", 3, 3, 6.0, 1);
        let m = ToyProvider::init(ToyConfig { k: 2, ..Default::default() }, &mut seeded(2));
        let site = ResidueId::new('A', 2);
        let open = m.features(&c, &site, &BTreeSet::new()).unwrap();
        let all: BTreeSet<ResidueId> = c.residues().map(|r| r.id).collect();
        let hidden = m.features(&c, &site, &all).unwrap();
        let n = m.config.n_rbf;
        assert_eq!(open[..6 * n], hidden[..6 * n]);
        let mask_block = &hidden[6 * n + MASK_TOKEN * n..];
        assert!(mask_block.iter().any(|v| *v > 0.0));
        let open_sum: f64 = open[6 * n..].iter().sum();
        let hidden_sum: f64 = hidden[6 * n..].iter().sum();
        assert!((open_sum - hidden_sum).abs() < 1e-12);
    }

    #[test]
    fn logit_backward_matches_differences() {
        let c = synthetic::two_chain_complex("U", 3, 3, 6.0, 1);
        let cfg = ToyConfig { hidden: 6, n_rbf: 4, init_scale: 1.0, ..Default::default() };
        let m = ToyProvider::init(cfg, &mut seeded(3));
        let f = m.features(&c, &ResidueId::new('B', 2), &BTreeSet::new()).unwrap();
        let target = 7;
        let mut d: [f64; 20] = m.log_probs_from_features(&f).unwrap().map(f64::exp);
        d[target] -= 1.0;
        let mut grad = crate::net::zero_like(&m);
        m.backward_logits(&f, &d, &mut grad).unwrap();
        let theta = crate::net::flatten(&m);
        let loss = |x: &[f64]| {
            let mut mm = m.clone();
            crate::net::assign(&mut mm, x);
            -mm.log_probs_from_features(&f).unwrap()[target]
        };
        let report = finite_diff_check(loss, &theta, &crate::net::flatten(&grad), &GradCheck::default()).unwrap();
        assert!(report.passed, "{}", report.max_rel_error);
    }

    #[test]
    fn joint_and_kl_gradients_match_differences() {
        let c = synthetic::two_chain_complex("U", 4, 4, 6.0, 1);
        let cfg = ToyConfig { hidden: 5, n_rbf: 3, k: 4, init_scale: 1.0, ..Default::default() };
        let m = ToyProvider::init(cfg, &mut seeded(3));
        let reference = ToyProvider::init(cfg, &mut seeded(4));
        let sites = [ResidueId::new('A', 2), ResidueId::new('B', 3), ResidueId::new('A', 3)];
        let aa: Vec<AminoAcid> = "WKD".chars().map(|l| AminoAcid::from_letter(l).unwrap()).collect();
        let plan = DecodingPlan::new(vec![sites[1], sites[0], sites[2]]);
        let theta = crate::net::flatten(&m);
        let total = |x: &[f64]| {
            let mut mm = m.clone();
            crate::net::assign(&mut mm, x);
            let mut g = crate::net::zero_like(&mm);
            let b = mm.joint_logprob_with_grad(&c, &sites, &aa, &plan, 1.0, &mut g).unwrap();
            let u = mm.unbound_logprob_with_grad(&c, &sites, &aa, &plan, 1.0, &mut g).unwrap();
            let kl = mm.kl_with_grad(&reference, &c, &sites, 1.0, &mut g).unwrap();
            b - 0.5 * u + 0.3 * kl
        };
        let mut g = crate::net::zero_like(&m);
        let b = m.joint_logprob_with_grad(&c, &sites, &aa, &plan, 1.0, &mut g).unwrap();
        m.unbound_logprob_with_grad(&c, &sites, &aa, &plan, -0.5, &mut g).unwrap();
        m.kl_with_grad(&reference, &c, &sites, 0.3, &mut g).unwrap();
        assert_eq!(b, crate::seqmodel::joint_site_logprob(&m, &c, &sites, &aa, &plan).unwrap());
        let report = finite_diff_check(total, &theta, &crate::net::flatten(&g), &GradCheck::default()).unwrap();
        assert!(report.passed, "{}", report.max_rel_error);
    }

    #[test]
    fn training_reduces_loss_deterministically() {
        let c = vec![synthetic::two_chain_complex("U", 6, 6, 6.0, 5)];
        let cfg = ToyConfig { steps: 200, ..Default::default() };
        let (a, log) = train_toy_provider(&c, &cfg).unwrap();
        let (b, _) = train_toy_provider(&c, &cfg).unwrap();
        assert_eq!(a, b);
        let head: f64 = log[..20].iter().map(|r| r.loss).sum::<f64>() / 20.0;
        let tail: f64 = log[log.len() - 20..].iter().map(|r| r.loss).sum::<f64>() / 20.0;
        assert!(tail < head, "{head} -> {tail}");
    }
}
