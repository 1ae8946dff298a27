use std::path::PathBuf;

use ebmddg::dsm::{dsm_loss, dsm_loss_and_grad, DsmBatch};
use ebmddg::energy::{energy_of, score_of, EnergyConfig, EnergyModel};
use ebmddg::geometry::{select_around, Neighborhood};
use ebmddg::ingest::{Complex, Point};
use ebmddg::net::{assign, finite_diff_check, flatten, zero_like, GradCheck, GradCheckReport};
use ebmddg::rng::{derive_seed, normal, seeded};
use ebmddg::seqmodel::{DecodingPlan, ToyConfig, ToyProvider};
use ebmddg::synthetic::two_chain_complex;
use serde::Serialize;

use super::Context;
use crate::config::GradcheckSettings;
use crate::error::CliError;
use crate::run::Stage;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub fixtures: usize,
    pub n_checked: usize,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

struct Fixture {
    complex: Complex,
    neigh: Neighborhood,
    coords: Vec<Point>,
}

/// A small two-chain complex with a neighborhood around one binder residue and
/// coordinates jittered off the idealized geometry.
fn fixture(i: usize, seed: u64) -> Fixture {
    let s = derive_seed(seed, i as u64);
    let (nb, nt) = (3 + i % 3, 3 + (i / 3) % 3);
    let complex = two_chain_complex(&format!("GC{i}"), nb, nt, 5.0 + 0.5 * (i % 4) as f64, s);
    let site = complex.chains[0].residues[i % nb].id;
    let neigh = select_around(&complex, &[site], 5).expect("synthetic sites have full backbones");
    let mut rng = seeded(s ^ 1);
    let coords = neigh.coords.iter().map(|p| [0, 1, 2].map(|k| p[k] + 0.1 * normal(&mut rng))).collect();
    Fixture { complex, neigh, coords }
}

fn flat(points: &[Point]) -> Vec<f64> {
    points.iter().flatten().copied().collect()
}

fn unflat(x: &[f64]) -> Vec<Point> {
    x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
}

struct Tally {
    name: &'static str,
    fixtures: usize,
    n_checked: usize,
    worst: f64,
    tol: f64,
}

impl Tally {
    fn new(name: &'static str, tol: f64) -> Self {
        Self { name, fixtures: 0, n_checked: 0, worst: 0.0, tol }
    }

    fn add(&mut self, r: &GradCheckReport) {
        self.fixtures += 1;
        self.n_checked += r.analytic.len();
        self.worst = self.worst.max(r.max_rel_error);
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name.into(),
            fixtures: self.fixtures,
            n_checked: self.n_checked,
            max_rel_error: self.worst,
            tol: self.tol,
            passed: self.worst <= self.tol,
        }
    }
}

/// Analytic gradients against central differences on fresh random models.
///
/// Checks the coordinate gradient of the energy on `settings.fixtures`
/// fixtures, and the parameter gradients of the energy, the DSM loss and the
/// toy provider's joint log-probability on `settings.param_fixtures`.
pub fn run_checks(settings: &GradcheckSettings, energy: EnergyConfig, toy: ToyConfig) -> Result<GradcheckReport, CliError> {
    let check = GradCheck { h: settings.h, tol: settings.tol, ..Default::default() };
    let mut coords = Tally::new("energy_coordinates", settings.tol);
    let mut params = Tally::new("energy_parameters", settings.tol);
    let mut dsm = Tally::new("dsm_parameters", settings.tol);
    let mut toy_t = Tally::new("toy_provider_parameters", settings.tol);

    for i in 0..settings.fixtures {
        let fx = fixture(i, settings.seed);
        let model = EnergyModel::init(energy, &mut seeded(derive_seed(settings.seed, 1000 + i as u64)));
        let analytic = flat(&score_of(&fx.complex, &fx.neigh, &fx.coords, &model)?);
        let f = |x: &[f64]| energy_of(&fx.complex, &fx.neigh, Some(&unflat(x)), &model).unwrap_or(f64::NAN);
        coords.add(&finite_diff_check(f, &flat(&fx.coords), &analytic, &check)?);

        if i >= settings.param_fixtures {
            continue;
        }
        let (aa, groups) = (fx.neigh.amino_acids(), fx.neigh.groups());
        let theta = flatten(&model);
        let analytic = flatten(&model.energy_and_grads(&aa, &groups, &fx.coords)?.params);
        let mut probe = model.clone();
        let f = |x: &[f64]| {
            assign(&mut probe, x);
            probe.energy(&aa, &groups, &fx.coords).unwrap_or(f64::NAN)
        };
        params.add(&finite_diff_check(f, &theta, &analytic, &check)?);

        let batch = DsmBatch::draw(&fx.neigh, 0.1f64.sqrt(), &mut seeded(derive_seed(settings.seed, 2000 + i as u64)));
        let (_, g) = dsm_loss_and_grad(&model, &batch, 0.1f64.sqrt())?;
        let mut probe = model.clone();
        let f = |x: &[f64]| {
            assign(&mut probe, x);
            dsm_loss(&probe, &batch, 0.1f64.sqrt()).unwrap_or(f64::NAN)
        };
        dsm.add(&finite_diff_check(f, &theta, &flatten(&g), &check)?);

        let provider = ToyProvider::init(ToyConfig { init_scale: 1.0, ..toy }, &mut seeded(derive_seed(settings.seed, 3000 + i as u64)));
        let sites: Vec<_> = fx.complex.residues().take(2).map(|r| r.id).collect();
        let assignments: Vec<_> = fx.complex.residues().skip(2).take(2).map(|r| r.aa).collect();
        let plan = DecodingPlan::random(&sites, &mut seeded(i as u64));
        let mut grad = zero_like(&provider);
        provider.joint_logprob_with_grad(&fx.complex, &sites, &assignments, &plan, 1.0, &mut grad)?;
        let mut probe = provider.clone();
        let mut scratch = zero_like(&provider);
        let f = |x: &[f64]| {
            assign(&mut probe, x);
            probe.joint_logprob_with_grad(&fx.complex, &sites, &assignments, &plan, 0.0, &mut scratch).unwrap_or(f64::NAN)
        };
        toy_t.add(&finite_diff_check(f, &flatten(&provider), &flatten(&grad), &check)?);
    }
    let checks: Vec<CheckResult> =
        [coords, params, dsm, toy_t].into_iter().filter(|t| t.fixtures > 0).map(Tally::finish).collect();
    let passed = checks.iter().all(|c| c.passed);
    Ok(GradcheckReport { checks, passed })
}

/// Writes `gradcheck.json`; a failed check is a numerical failure.
pub fn gradcheck(ctx: &Context) -> Result<PathBuf, CliError> {
    let report = run_checks(&ctx.config.gradcheck, ctx.config.energy, ctx.config.toy)?;
    for c in &report.checks {
        log::info!("{}: max relative error {:.3e} over {} fixtures ({})", c.name, c.max_rel_error, c.fixtures, if c.passed { "pass" } else { "FAIL" });
    }
    let stage = Stage::begin(ctx.root.join("gradcheck"))?;
    stage.write_json("gradcheck.json", &report)?;
    let out = stage.commit(ctx.manifest("gradcheck"))?;
    if report.passed {
        Ok(out)
    } else {
        Err(CliError::Numerical(format!("gradient check failed; see {}", out.join("gradcheck.json").display())))
    }
}
