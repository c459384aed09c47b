//! Flat-space kernel against the Euclidean heat kernel, and the implicit
//! propagator against dense matrix exponentials.

use std::f64::consts::PI;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ricci_lab::geometry::{build_complex, GeometryModel, ModelKind};
use ricci_lab::heat::{
    dense_reference, discrete_delta, solve_conjugate_forward, solve_conjugate_forward_with, BoundaryCondition,
};
use ricci_lab::TimeGrid;
use serde::{Deserialize, Serialize};

use super::common::{max_abs_dev, MASS, ORACLE};
use super::{RunOptions, Suite};
use crate::check::Checks;
use crate::config::{positive, Config};
use crate::output::{fmt, Artifacts, Csv};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceTable {
    /// Cells per unit length of the small disk and sphere.
    pub resolution: f64,
    pub horizon: f64,
    /// Coarse step count; the fine run uses twice as many.
    pub steps: usize,
    pub substeps: usize,
    pub min_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSuite {
    pub ball_radius: f64,
    /// Chart radius of the comparison region.
    pub probe_radius: f64,
    /// Lower end of the τ window in units of `h²`.
    pub tau_min_cells: f64,
    pub tau_max: f64,
    pub tolerance: f64,
    pub mass_tolerance: f64,
    pub reference: ReferenceTable,
}

impl Suite for OracleSuite {
    fn validate(cfg: &Config<Self>) -> Result<()> {
        let s = &cfg.suite;
        for (name, v) in [
            ("ball_radius", s.ball_radius),
            ("probe_radius", s.probe_radius),
            ("tau_min_cells", s.tau_min_cells),
            ("tau_max", s.tau_max),
            ("tolerance", s.tolerance),
            ("mass_tolerance", s.mass_tolerance),
            ("reference.resolution", s.reference.resolution),
            ("reference.horizon", s.reference.horizon),
            ("reference.min_ratio", s.reference.min_ratio),
        ] {
            positive(name, v)?;
        }
        if s.reference.steps == 0 || s.reference.substeps == 0 {
            bail!("suite.reference.steps and substeps must be positive");
        }
        if !matches!(cfg.geometry()?.kind, ModelKind::FlatEuclidean { .. }) {
            bail!("oracle experiments need a flat_euclidean geometry");
        }
        if s.probe_radius >= s.ball_radius {
            bail!("suite.probe_radius must be smaller than suite.ball_radius");
        }
        cfg.solver()?;
        Ok(())
    }

    fn execute(cfg: &Config<Self>, opts: &RunOptions, out: &mut Artifacts) -> Result<Checks> {
        let s = &cfg.suite;
        let model = cfg.geometry()?;
        let solver = cfg.solver()?;
        let grid = solver.time.grid()?;
        let n = model.dim();
        let complex = Arc::new(build_complex(model, s.ball_radius, &grid)?);
        let y = complex.basepoint();
        let field = solve_conjugate_forward_with(
            complex.clone(),
            y,
            grid.start(),
            BoundaryCondition::Neumann,
            grid.end(),
            &solver.options(),
        )
        .context("solving the flat kernel")?;
        let h = complex.cell_width();
        let tau_min = s.tau_min_cells * h * h;
        let mut csv = Csv::new(&["tau", "tau_over_h2", "sup_relative_error"]);
        let mut worst = 0.0f64;
        let mut compared = 0usize;
        for (k, &t) in field.times().iter().enumerate() {
            let tau = t - grid.start();
            if tau < tau_min * (1.0 - 1e-12) || tau > s.tau_max * (1.0 + 1e-12) {
                continue;
            }
            let peak = (4.0 * PI * tau).powf(-0.5 * n as f64);
            let u = field.at(k);
            let mut err = 0.0f64;
            for (i, c) in complex.cells().iter().enumerate() {
                let r = c.position[0].hypot(c.position[1]);
                if r > s.probe_radius {
                    continue;
                }
                err = err.max((u[i] - peak * (-r * r / (4.0 * tau)).exp()).abs() / peak);
            }
            worst = worst.max(err);
            compared += 1;
            csv.row(&[fmt(tau), fmt(tau / (h * h)), fmt(err)]);
        }
        if compared == 0 {
            bail!("no time node falls in the window [{tau_min}, {}]", s.tau_max);
        }
        out.write("oracle.csv", csv.finish().as_bytes())?;

        let mut checks = Checks::new(MASS, opts.tol_scale);
        checks.at_most("flat_mass_error", max_abs_dev(field.mass_trace(), 1.0), s.mass_tolerance);
        checks.statement(ORACLE);
        checks.at_most("kernel_vs_gaussian_sup_relative", worst, s.tolerance);

        let mut rcsv = Csv::new(&["geometry", "steps", "max_error"]);
        let mut min_ratio = f64::INFINITY;
        let r = &s.reference;
        let disk = GeometryModel::flat(n, 1.0).with_resolution(r.resolution);
        let sphere = GeometryModel::sphere().with_resolution(r.resolution);
        for (name, m) in [("flat_disk", &disk), ("sphere", &sphere)] {
            let e1 = reference_error(m, r.steps, r.horizon, r.substeps)?;
            let e2 = reference_error(m, 2 * r.steps, r.horizon, r.substeps)?;
            rcsv.row(&[name.to_string(), r.steps.to_string(), fmt(e1)]);
            rcsv.row(&[name.to_string(), (2 * r.steps).to_string(), fmt(e2)]);
            min_ratio = min_ratio.min(e1 / e2);
        }
        out.write("reference.csv", rcsv.finish().as_bytes())?;
        checks.at_least("step_halving_error_ratio", min_ratio, r.min_ratio);
        out.write_json("summary.json", &Summary { cell_width: h, tau_min, worst_relative_error: worst, min_ratio })?;
        Ok(checks)
    }
}

#[derive(Serialize)]
struct Summary {
    cell_width: f64,
    tau_min: f64,
    worst_relative_error: f64,
    min_ratio: f64,
}

/// Sup-norm error at the final time between implicit stepping and the
/// dense propagator.
fn reference_error(model: &GeometryModel, steps: usize, horizon: f64, substeps: usize) -> Result<f64> {
    let grid = TimeGrid::uniform(0.0, horizon, steps)?;
    let c = Arc::new(build_complex(model, 1.0, &grid)?);
    let u0 = discrete_delta(&c, c.basepoint(), 0.0)?;
    let exact = dense_reference(&c, &u0, 0.0, horizon, BoundaryCondition::Neumann, substeps)?;
    let z = solve_conjugate_forward(c.clone(), c.basepoint(), 0.0, BoundaryCondition::Neumann, horizon)?;
    let last = z.n_times() - 1;
    Ok(z.at(last).iter().zip(&exact[last]).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())))
}
