//! Supervised training of the combiner, the trainable energy model and
//! optionally the toy provider on measured ΔΔG.
//!
//! Loss per record is `(ΔΔĜ − ΔΔG)² + β · KL(p_θ ‖ p_ref)` with the KL summed
//! over mutation sites. Mutant samples come from the frozen reference model and
//! are drawn once in [`prepare_record`].

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ba_terms, decoding_plan, sample_record, separated_coords, BaTerms, DdgConfig, DdgError, DdgHead, EnergyTerms, RecordSample, UnboundConvention};
use crate::energy::{EnergyConfig, EnergyModel};
use crate::geometry::{residue_features, RadialBasis};
use crate::ingest::{AminoAcid, Complex, Group, MutationSet, Point};
use crate::net::{assign, axpy, flatten, zero_like, Adam, AdamConfig};
use crate::rng::seeded;
use crate::seqmodel::{DecodingPlan, LogProbProvider, ToyProvider};

/// A labeled mutation set on a complex.
#[derive(Debug, Clone, PartialEq)]
pub struct DdgRecord {
    pub complex: Arc<Complex>,
    pub muts: MutationSet,
    pub ddg: f64,
    pub split_key: String,
}

/// Cached energy input: sequence, groups and feature rows of one state.
#[derive(Debug, Clone, PartialEq)]
struct EnergyInput {
    aa: Vec<AminoAcid>,
    groups: Vec<Group>,
    feats: Vec<f64>,
}

/// Record with everything that stays fixed during training.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRecord {
    pub record: DdgRecord,
    pub sample: RecordSample,
    pub plan: DecodingPlan,
    /// Log-probability terms under the provider used at preparation.
    pub ba: BaTerms,
    /// States `b^mut, u^mut, b^wt, u^wt`; `None` contributes zero energy.
    inputs: [Option<EnergyInput>; 4],
}

/// Sign of each state in ΔΔE.
const STATE_SIGNS: [f64; 4] = [1.0, -1.0, -1.0, 1.0];

fn input(aa: &[AminoAcid], groups: &[Group], coords: &[Point], rbf: &RadialBasis<f64>) -> Option<EnergyInput> {
    if !(groups.contains(&Group::Binder) && groups.contains(&Group::Target)) {
        return None;
    }
    Some(EnergyInput { aa: aa.to_vec(), groups: groups.to_vec(), feats: residue_features(coords, groups, rbf) })
}

/// Samples the mutant structure, fixes the decoding order and caches features.
pub fn prepare_record(
    record: &DdgRecord,
    provider: &dyn LogProbProvider,
    reference: &EnergyModel<f64>,
    energy_config: &EnergyConfig,
    config: &DdgConfig,
) -> Result<PreparedRecord, DdgError> {
    let sample = sample_record(&record.complex, &record.muts, reference, &config.langevin)?;
    let plan = decoding_plan(&record.muts, config);
    let ba = ba_terms(provider, &record.complex, &record.muts, &plan)?;
    let rbf = RadialBasis::uniform(energy_config.n_rbf, energy_config.rbf_max);
    let groups = sample.neigh.groups();
    let wt_aa = sample.neigh.amino_acids();
    let bm = input(&sample.mut_aa, &groups, &sample.mut_coords, &rbf);
    let bw = input(&wt_aa, &groups, &sample.wt_coords, &rbf);
    let (um, uw) = match config.unbound {
        UnboundConvention::Zero => (None, None),
        UnboundConvention::Separated => (
            input(&sample.mut_aa, &groups, &separated_coords(&groups, &sample.mut_coords), &rbf),
            input(&wt_aa, &groups, &separated_coords(&groups, &sample.wt_coords), &rbf),
        ),
    };
    Ok(PreparedRecord { record: record.clone(), sample, plan, ba, inputs: [bm, um, bw, uw] })
}

impl PreparedRecord {
    pub fn energy_terms(&self, model: &EnergyModel<f64>) -> Result<EnergyTerms, DdgError> {
        let mut e = [0.0; 4];
        for (slot, inp) in e.iter_mut().zip(&self.inputs) {
            if let Some(inp) = inp {
                *slot = model.energy_from_features(&inp.aa, &inp.groups, &inp.feats)?;
            }
        }
        Ok(EnergyTerms { bound_mut: e[0], unbound_mut: e[1], bound_wt: e[2], unbound_wt: e[3] })
    }

    fn assignments(&self) -> (Vec<AminoAcid>, Vec<AminoAcid>) {
        (self.record.muts.iter().map(|m| m.mt).collect(), self.record.muts.iter().map(|m| m.wt).collect())
    }

    /// Log-probability terms under `toy`, accumulating `scale_k · ∇θ L_k` per term.
    fn toy_terms(&self, toy: &ToyProvider, scales: Option<([f64; 4], &mut ToyProvider)>) -> Result<BaTerms, DdgError> {
        let sites = self.record.muts.sites();
        let (mt, wt) = self.assignments();
        let c = &self.record.complex;
        let mut scratch;
        let (s, grad) = match scales {
            Some((s, g)) => (s, g),
            None => {
                scratch = zero_like(toy);
                ([0.0; 4], &mut scratch)
            }
        };
        Ok(BaTerms {
            bound_mut: toy.joint_logprob_with_grad(c, &sites, &mt, &self.plan, s[0], grad)?,
            unbound_mut: toy.unbound_logprob_with_grad(c, &sites, &mt, &self.plan, s[1], grad)?,
            bound_wt: toy.joint_logprob_with_grad(c, &sites, &wt, &self.plan, s[2], grad)?,
            unbound_wt: toy.unbound_logprob_with_grad(c, &sites, &wt, &self.plan, s[3], grad)?,
        })
    }
}

/// Everything the optimizer updates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub head: DdgHead,
    pub energy: EnergyModel<f64>,
    /// Trainable toy provider; `None` keeps the prepared log-probabilities fixed.
    pub provider: Option<ToyProvider>,
}

impl TrainState {
    fn vector(&self, train_energy: bool) -> Vec<f64> {
        let mut v = vec![self.head.log_kbt, self.head.s, self.head.b];
        if train_energy {
            v.extend(flatten(&self.energy));
        }
        if let Some(p) = &self.provider {
            v.extend(flatten(p));
        }
        v
    }

    fn load(&mut self, v: &[f64], train_energy: bool) {
        self.head.log_kbt = v[0];
        self.head.s = v[1];
        self.head.b = v[2];
        let mut off = 3;
        if train_energy {
            let n = crate::net::n_params(&self.energy);
            assign(&mut self.energy, &v[off..off + n]);
            off += n;
        }
        if let Some(p) = &mut self.provider {
            let n = crate::net::n_params(p);
            assign(p, &v[off..off + n]);
        }
    }

    fn zero_grad(&self) -> TrainState {
        TrainState {
            head: DdgHead { log_kbt: 0.0, s: 0.0, b: 0.0, beta_kl: self.head.beta_kl },
            energy: zero_like(&self.energy),
            provider: self.provider.as_ref().map(zero_like),
        }
    }

    fn add_scaled(&mut self, scale: f64, other: &TrainState) {
        self.head.log_kbt += scale * other.head.log_kbt;
        self.head.s += scale * other.head.s;
        self.head.b += scale * other.head.b;
        axpy(&mut self.energy, scale, &other.energy);
        if let (Some(a), Some(b)) = (&mut self.provider, &other.provider) {
            axpy(a, scale, b);
        }
    }
}

/// Per-record loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordLoss {
    pub loss: f64,
    pub squared_error: f64,
    pub kl: f64,
    pub prediction: f64,
}

fn record_forward(state: &TrainState, rec: &PreparedRecord, kl_reference: Option<&ToyProvider>) -> Result<RecordLoss, DdgError> {
    let ba = match &state.provider {
        Some(toy) => rec.toy_terms(toy, None)?,
        None => rec.ba,
    };
    let dde = rec.energy_terms(&state.energy)?.dde();
    let prediction = state.head.combine(ba.raw(), dde);
    let squared_error = (prediction - rec.record.ddg).powi(2);
    let kl = match (&state.provider, kl_reference) {
        (Some(toy), Some(r)) => {
            let mut scratch = zero_like(toy);
            toy.kl_with_grad(r, &rec.record.complex, &rec.record.muts.sites(), 0.0, &mut scratch)?
        }
        _ => 0.0,
    };
    Ok(RecordLoss { loss: squared_error + state.head.beta_kl * kl, squared_error, kl, prediction })
}

/// Loss of one record and its gradient with respect to every trainable quantity.
pub fn record_loss_and_grad(
    state: &TrainState,
    rec: &PreparedRecord,
    kl_reference: Option<&ToyProvider>,
) -> Result<(RecordLoss, TrainState), DdgError> {
    let fwd = record_forward(state, rec, kl_reference)?;
    let mut grad = state.zero_grad();
    let ba = match &state.provider {
        Some(toy) => rec.toy_terms(toy, None)?,
        None => rec.ba,
    };
    let e = rec.energy_terms(&state.energy)?;
    let (kbt, dde) = (state.head.kbt(), e.dde());
    let r = fwd.prediction - rec.record.ddg;
    grad.head.log_kbt = 2.0 * r * kbt * ba.raw();
    grad.head.s = -2.0 * r * dde;
    grad.head.b = -2.0 * r;
    for (inp, sign) in rec.inputs.iter().zip(STATE_SIGNS) {
        if let Some(inp) = inp {
            let (_, _, g) = state.energy.backprop_features(&inp.aa, &inp.groups, &inp.feats)?;
            axpy(&mut grad.energy, -2.0 * r * state.head.s * sign, &g);
        }
    }
    if let (Some(toy), Some(g)) = (&state.provider, &mut grad.provider) {
        // ba_raw = -(L_bm - L_um - L_bw + L_uw)
        let c = 2.0 * r * kbt;
        rec.toy_terms(toy, Some(([-c, c, c, -c], g)))?;
        if let Some(reference) = kl_reference {
            if state.head.beta_kl != 0.0 {
                toy.kl_with_grad(reference, &rec.record.complex, &rec.record.muts.sites(), state.head.beta_kl, g)?;
            }
        }
    }
    Ok((fwd, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub train_energy: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-4, batch_size: 2, max_steps: 30_000, max_epochs: 10_000, patience: 10, train_energy: true, seed: 0 }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
    pub kl: f64,
    #[serde(rename = "k_BT")]
    pub k_bt: f64,
    pub s: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// State with the best validation MSE, or the last state without validation records.
    pub best: TrainState,
    pub best_epoch: usize,
    pub last: TrainState,
    pub steps: usize,
    pub log: Vec<EpochLog>,
}

fn mean_stats(state: &TrainState, recs: &[&PreparedRecord], kl_reference: Option<&ToyProvider>) -> Result<(f64, f64), DdgError> {
    let mut mse = 0.0;
    let mut kl = 0.0;
    for r in recs {
        let l = record_forward(state, r, kl_reference)?;
        mse += l.squared_error;
        kl += l.kl;
    }
    let n = recs.len().max(1) as f64;
    Ok((mse / n, kl / n))
}

/// Minibatch Adam on `train_set` with early stopping on `val_set`.
pub fn train(
    train_set: &[PreparedRecord],
    val_set: &[PreparedRecord],
    init: TrainState,
    kl_reference: Option<&ToyProvider>,
    config: &TrainConfig,
) -> Result<TrainOutcome, DdgError> {
    if train_set.is_empty() {
        return Err(DdgError::NoRecords);
    }
    let train_refs: Vec<&PreparedRecord> = train_set.iter().collect();
    let val_refs: Vec<&PreparedRecord> = val_set.iter().collect();
    let mut state = init;
    let mut theta = state.vector(config.train_energy);
    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..Default::default() }, theta.len());
    let mut rng = seeded(config.seed);
    let mut log = Vec::new();

    let snapshot = |state: &TrainState, epoch: usize| -> Result<EpochLog, DdgError> {
        let (train_mse, kl) = mean_stats(state, &train_refs, kl_reference)?;
        let val_mse = if val_refs.is_empty() { None } else { Some(mean_stats(state, &val_refs, kl_reference)?.0) };
        Ok(EpochLog { epoch, train_mse, val_mse, kl, k_bt: state.head.kbt(), s: state.head.s, b: state.head.b })
    };

    let first = snapshot(&state, 0)?;
    let mut best = (state.clone(), 0usize, first.val_mse.unwrap_or(f64::INFINITY));
    log.push(first);
    let mut steps = 0;
    let mut stale = 0;
    let batch = config.batch_size.max(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    'epochs: for epoch in 1..=config.max_epochs {
        if steps >= config.max_steps {
            break;
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            if steps >= config.max_steps {
                break;
            }
            let mut grad = state.zero_grad();
            let mut loss = 0.0;
            for &i in chunk {
                let (l, g) = record_loss_and_grad(&state, &train_set[i], kl_reference)?;
                loss += l.loss / chunk.len() as f64;
                grad.add_scaled(1.0 / chunk.len() as f64, &g);
            }
            let gvec = grad.vector(config.train_energy);
            if !loss.is_finite() || gvec.iter().any(|g| !g.is_finite()) {
                return Err(DdgError::Diverged { step: steps + 1, last_good: Box::new(state) });
            }
            adam.step(&mut theta, &gvec)?;
            state.load(&theta, config.train_energy);
            steps += 1;
        }
        let row = snapshot(&state, epoch)?;
        if !row.train_mse.is_finite() {
            return Err(DdgError::Diverged { step: steps, last_good: Box::new(best.0) });
        }
        log::info!("epoch {epoch} step {steps} train_mse {:.4} val_mse {:?}", row.train_mse, row.val_mse);
        log.push(row);
        match row.val_mse {
            Some(v) if v < best.2 => {
                best = (state.clone(), epoch, v);
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if stale >= config.patience {
                    break 'epochs;
                }
            }
            None => best = (state.clone(), epoch, f64::INFINITY),
        }
    }
    Ok(TrainOutcome { best: best.0, best_epoch: best.1, last: state, steps, log })
}
