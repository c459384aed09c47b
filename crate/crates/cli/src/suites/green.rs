//! Exhaustion of the minimal fundamental solution by Dirichlet and Neumann
//! Green functions on nested balls.

use anyhow::{bail, Context, Result};
use ricci_lab::flow::certify;
use ricci_lab::geometry::model_flow;
use ricci_lab::green::{exhaustion_convergence, green_family_on_flow};
use ricci_lab::heat::BoundaryCondition;
use serde::{Deserialize, Serialize};

use super::common::{certificate_checks, volume_comparison, EXHAUSTION, MASS, VOLUME};
use super::{RunOptions, Suite};
use crate::check::Checks;
use crate::config::{positive, Config};
use crate::output::Artifacts;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenSuite {
    /// Radii of the nested balls `B_k`.
    pub ks: Vec<f64>,
    pub monotone_tolerance: f64,
    pub domination_tolerance: f64,
    pub gap_tolerance: f64,
    pub mass_tolerance: f64,
    /// Radii and scales of the ball-volume ratio comparison.
    pub comparison_radii: Vec<f64>,
    pub comparison_taus: Vec<f64>,
    pub comparison_tolerance: f64,
}

impl Suite for GreenSuite {
    fn validate(cfg: &Config<Self>) -> Result<()> {
        let s = &cfg.suite;
        if s.ks.len() < 3 {
            bail!("suite.ks needs at least three radii");
        }
        if s.ks.windows(2).any(|w| w[1] <= w[0]) {
            bail!("suite.ks must increase strictly");
        }
        for &k in &s.ks {
            positive("ks", k)?;
        }
        for &r in s.comparison_radii.iter().chain(&s.comparison_taus) {
            positive("comparison_radii/comparison_taus", r)?;
        }
        positive("monotone_tolerance", s.monotone_tolerance)?;
        positive("domination_tolerance", s.domination_tolerance)?;
        positive("gap_tolerance", s.gap_tolerance)?;
        positive("mass_tolerance", s.mass_tolerance)?;
        positive("comparison_tolerance", s.comparison_tolerance)?;
        cfg.geometry()?;
        cfg.solver()?;
        Ok(())
    }

    fn execute(cfg: &Config<Self>, opts: &RunOptions, out: &mut Artifacts) -> Result<Checks> {
        let s = &cfg.suite;
        let solver = cfg.solver()?;
        let grid = solver.time.grid()?;
        let flow = model_flow(cfg.geometry()?, &grid).context("evolving the metric")?;
        let sopts = solver.options();
        let z = green_family_on_flow(&flow, BoundaryCondition::Neumann, &s.ks, &grid, &sopts)
            .context("solving the Neumann family")?;
        let g = green_family_on_flow(&flow, BoundaryCondition::Dirichlet, &s.ks, &grid, &sopts)
            .context("solving the Dirichlet family")?;
        let table = exhaustion_convergence(&z, &g)?;
        out.write("convergence.csv", table.to_csv().as_bytes())?;

        let mut checks = Checks::new(MASS, opts.tol_scale);
        let mass = z.records.iter().map(|r| r.mass_error()).fold(0.0f64, f64::max);
        checks.at_most("neumann_mass_error", mass, s.mass_tolerance);
        checks.holds("dirichlet_mass_non_increasing", g.records.iter().all(|r| r.mass_trace_ok(s.mass_tolerance)));
        checks.statement(EXHAUSTION);
        checks.at_most("dirichlet_monotone_excess", table.max_monotone_excess(), s.monotone_tolerance);
        checks.at_most("dirichlet_below_neumann_excess", table.max_domination_excess(), s.domination_tolerance);
        checks.holds("d_k_strictly_decreasing", table.d_strictly_decreasing());
        checks.at_most("final_neumann_dirichlet_gap", table.final_gap(), s.gap_tolerance);

        let cert = certify(&flow)?;
        out.write("certificate.txt", cert.to_text().as_bytes())?;
        certificate_checks(&mut checks, &cert, "");
        checks.statement(VOLUME);
        let largest = z.records.last().expect("at least three radii").complex();
        let (csv, worst) = volume_comparison(largest, cert.k0, cert.horizon, &s.comparison_radii, &s.comparison_taus)?;
        out.write("volume_comparison.csv", csv.as_bytes())?;
        checks.at_most("ball_volume_ratio_over_bound", worst, 1.0 + s.comparison_tolerance);

        out.write_json(
            "summary.json",
            &Summary {
                ks: s.ks.clone(),
                probe_cells: z.probe.keys.len(),
                probe_window: (z.probe.t1, z.probe.t2),
                final_gap: table.final_gap(),
                k0: cert.k0,
                alpha3: cert.alpha3,
            },
        )?;
        Ok(checks)
    }
}

#[derive(Serialize)]
struct Summary {
    ks: Vec<f64>,
    probe_cells: usize,
    probe_window: (f64, f64),
    final_gap: f64,
    k0: f64,
    alpha3: f64,
}
