//! Weighted maximum principle on random subsolution instances.

use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use ricci_lab::flow::certify;
use ricci_lab::geometry::{build_complex_on_flow, model_flow, DiscreteComplex};
use ricci_lab::heat::{solve_linear_parabolic_with, BoundaryCondition, SolverOptions};
use ricci_lab::maxprin::{
    build_cutoff, check_conclusion, energy_inequality_check, random_instance, CutoffData, InstanceBounds,
};
use ricci_lab::TimeGrid;
use serde::{Deserialize, Serialize};

use super::common::{certificate_checks, MAXIMUM};
use super::{RunOptions, Suite};
use crate::check::Checks;
use crate::config::{positive, Config};
use crate::output::{fmt, Artifacts, Csv};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxprinSuite {
    pub seeds: u64,
    /// First seed; `--seed` overrides it.
    #[serde(default)]
    pub first_seed: u64,
    pub lambda: f64,
    /// Cutoff radius `R`.
    pub radius: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub ball_radius: f64,
    /// Horizon over which the flow is certified.
    pub horizon: f64,
    pub steps_per_unit: f64,
    /// Length of each solve in units of `η`.
    pub eta_multiple: f64,
    pub max_tolerance: f64,
    /// Energy inequality slack relative to the largest `∫ u₊² dV`.
    pub energy_tolerance: f64,
}

impl Suite for MaxprinSuite {
    fn validate(cfg: &Config<Self>) -> Result<()> {
        let s = &cfg.suite;
        if s.seeds == 0 {
            bail!("suite.seeds must be positive");
        }
        for (name, v) in [
            ("lambda", s.lambda),
            ("radius", s.radius),
            ("alpha1", s.alpha1),
            ("alpha2", s.alpha2),
            ("ball_radius", s.ball_radius),
            ("horizon", s.horizon),
            ("steps_per_unit", s.steps_per_unit),
            ("eta_multiple", s.eta_multiple),
            ("max_tolerance", s.max_tolerance),
            ("energy_tolerance", s.energy_tolerance),
        ] {
            positive(name, v)?;
        }
        if s.eta_multiple < 1.0 {
            bail!("suite.eta_multiple must be at least 1 so the energy inequality spans [0, η]");
        }
        if s.ball_radius < s.radius + 1.0 {
            bail!("suite.ball_radius must contain the annulus R <= r <= R + 1");
        }
        cfg.geometry()?;
        Ok(())
    }

    fn execute(cfg: &Config<Self>, opts: &RunOptions, out: &mut Artifacts) -> Result<Checks> {
        let s = &cfg.suite;
        let model = cfg.geometry()?;
        let sopts = cfg.solver.as_ref().map(|b| b.options()).unwrap_or_default();
        let steps = (s.horizon * s.steps_per_unit).ceil() as usize;
        let certify_grid = TimeGrid::uniform(0.0, s.horizon, steps)?;
        let flow = model_flow(model, &certify_grid).context("evolving the metric")?;
        let cert = certify(&flow)?;
        out.write("certificate.txt", cert.to_text().as_bytes())?;
        let probe = build_complex_on_flow(&flow, s.ball_radius, &certify_grid)?;
        let draft = build_cutoff(&probe, &cert, s.lambda, s.radius, s.alpha1, s.alpha2)?;
        let end = s.eta_multiple * draft.eta;
        if end > s.horizon * (1.0 + 1e-12) {
            bail!("{} η = {end} exceeds the certified horizon {}", s.eta_multiple, s.horizon);
        }
        let grid = TimeGrid::uniform(0.0, end, (end * s.steps_per_unit).ceil() as usize)?;
        let complex = Arc::new(build_complex_on_flow(&flow, s.ball_radius, &grid)?);
        let cutoff = build_cutoff(&complex, &cert, s.lambda, s.radius, s.alpha1, s.alpha2)?;
        out.write_json("cutoff.json", &Constants::of(&cutoff))?;

        let first = opts.seed.unwrap_or(s.first_seed);
        let seeds: Vec<u64> = (first..first + s.seeds).collect();
        let bounds = InstanceBounds { alpha1: s.alpha1, alpha2: s.alpha2 };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.jobs.max(1)).build()?;
        let results: Vec<Result<SeedResult>> = pool
            .install(|| seeds.par_iter().map(|&seed| run_seed(seed, &complex, &cutoff, bounds, &sopts, s)).collect());
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;

        let mut csv = Csv::new(&["seed", "max_u", "energy_residual", "energy_tolerance", "bump_residual", "pass"]);
        for r in &results {
            csv.row(&[
                r.seed.to_string(),
                fmt(r.max_u),
                fmt(r.energy_residual),
                fmt(r.energy_tolerance),
                fmt(r.bump_residual),
                r.pass.to_string(),
            ]);
            if let Some(bytes) = &r.dump {
                out.write(&format!("trajectories/seed-{}.bin", r.seed), bytes)?;
            }
        }
        out.write("verdicts.csv", csv.finish().as_bytes())?;

        let mut checks = Checks::new(MAXIMUM, opts.tol_scale);
        checks.at_most(
            "max_u_over_seeds",
            results.iter().map(|r| r.max_u).fold(f64::NEG_INFINITY, f64::max),
            s.max_tolerance,
        );
        let excess = results
            .iter()
            .flat_map(|r| [r.energy_residual - r.energy_tolerance, r.bump_residual - r.bump_tolerance])
            .fold(f64::NEG_INFINITY, f64::max);
        checks.at_most("energy_inequality_excess", excess, 0.0);
        checks.holds("coefficients_within_bounds", results.iter().all(|r| r.within));
        let n = cert.dim as f64;
        let lambda1 = s.lambda * (cert.alpha3 * cert.horizon).exp();
        let eta = if cert.alpha3 == 0.0 {
            (1.0 / (8.0 * lambda1)).min(cert.horizon)
        } else {
            (1.0 / (8.0 * lambda1)).min((9.0f64 / 8.0).ln() / cert.alpha3)
        };
        checks.equal("lambda1", cutoff.lambda1, lambda1);
        checks.equal("eta", cutoff.eta, eta);
        checks.equal("c1", cutoff.c1, 2.0 * s.alpha2 + 4.0 * s.alpha1 * s.alpha1 + n * cert.alpha3 / 2.0);
        certificate_checks(&mut checks, &cert, "");
        Ok(checks)
    }
}

struct SeedResult {
    seed: u64,
    max_u: f64,
    energy_residual: f64,
    energy_tolerance: f64,
    bump_residual: f64,
    bump_tolerance: f64,
    within: bool,
    pass: bool,
    dump: Option<Vec<u8>>,
}

fn run_seed(
    seed: u64,
    complex: &Arc<DiscreteComplex>,
    cutoff: &CutoffData,
    bounds: InstanceBounds,
    sopts: &SolverOptions,
    s: &MaxprinSuite,
) -> Result<SeedResult> {
    let inst = random_instance(seed, complex, bounds)?;
    let end = complex.times().end();
    let field = solve_linear_parabolic_with(
        complex.clone(),
        &inst.coeffs,
        &inst.u0,
        Some(&inst.forcing),
        BoundaryCondition::Neumann,
        end,
        sopts,
    )
    .with_context(|| format!("seed {seed}"))?;
    let verdict = check_conclusion(&field);
    let energy = energy_inequality_check(&field, cutoff, false, s.energy_tolerance)?;
    // the same coefficients with positive data, so the inequality is not vacuous
    let bump: Vec<f64> = cutoff.r0.iter().map(|r| (1.0 - r * r).max(0.0)).collect();
    let positive = solve_linear_parabolic_with(
        complex.clone(),
        &inst.coeffs,
        &bump,
        Some(&inst.forcing),
        BoundaryCondition::Neumann,
        end,
        sopts,
    )
    .with_context(|| format!("seed {seed}, positive data"))?;
    let bump_check = energy_inequality_check(&positive, cutoff, true, s.energy_tolerance)?;
    let pass = verdict.max_u <= s.max_tolerance && energy.pass && bump_check.pass;
    Ok(SeedResult {
        seed,
        max_u: verdict.max_u,
        energy_residual: energy.residual,
        energy_tolerance: energy.tolerance,
        bump_residual: bump_check.residual,
        bump_tolerance: bump_check.tolerance,
        within: inst.coeffs.within(bounds.alpha1, bounds.alpha2),
        pass,
        dump: (!pass).then(|| field.to_binary()),
    })
}

#[derive(Serialize)]
struct Constants {
    lambda: f64,
    lambda1: f64,
    eta: f64,
    c1: f64,
    alpha1: f64,
    alpha2: f64,
    alpha3: f64,
    horizon: f64,
    radius: f64,
}

impl Constants {
    fn of(c: &CutoffData) -> Self {
        Self {
            lambda: c.lambda,
            lambda1: c.lambda1,
            eta: c.eta,
            c1: c.c1,
            alpha1: c.alpha1,
            alpha2: c.alpha2,
            alpha3: c.alpha3,
            horizon: c.horizon,
            radius: c.radius,
        }
    }
}
