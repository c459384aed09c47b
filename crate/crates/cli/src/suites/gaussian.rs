//! Gaussian upper bound of the flat kernel, the mass majorant and the
//! volume comparison.

use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ricci_lab::flow::certify;
use ricci_lab::geometry::{build_complex_on_flow, model_flow};
use ricci_lab::green::{
    fit_samples, gaussian_samples, held_out_inflation, mass_integrability_check, sublinear_mass_check, GreenRecord,
    SampleSpec,
};
use ricci_lab::heat::{solve_conjugate_forward_with, BoundaryCondition};
use serde::{Deserialize, Serialize};

use super::common::{certificate_checks, closed_form_deviation, volume_comparison, GAUSSIAN, MASS, VOLUME};
use super::{RunOptions, Suite};
use crate::check::Checks;
use crate::config::{positive, Config};
use crate::output::{fmt, Artifacts, Csv};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSuite {
    pub ball_radius: f64,
    #[serde(default)]
    pub sampling: SampleSpec,
    pub d_range: [f64; 2],
    pub c_range: [f64; 2],
    pub held_out_tolerance: f64,
    pub quadrature_tolerance: f64,
    pub mass_radii: Vec<f64>,
    pub comparison_radii: Vec<f64>,
    pub comparison_taus: Vec<f64>,
    pub comparison_tolerance: f64,
    pub closed_form_tolerance: f64,
    pub mass_tolerance: f64,
}

impl Suite for GaussianSuite {
    fn validate(cfg: &Config<Self>) -> Result<()> {
        let s = &cfg.suite;
        positive("ball_radius", s.ball_radius)?;
        for (name, r) in [("d_range", s.d_range), ("c_range", s.c_range)] {
            positive(name, r[0])?;
            if r[1] < r[0] {
                bail!("suite.{name} must be ordered");
            }
        }
        let sp = &s.sampling;
        positive("sampling.max_exponent", sp.max_exponent)?;
        positive("sampling.d_min", sp.d_min)?;
        if sp.d_max < sp.d_min || sp.d_count == 0 {
            bail!("suite.sampling needs d_min <= d_max and d_count >= 1");
        }
        for v in [sp.tau_min, sp.tau_max, sp.max_radius].into_iter().flatten() {
            positive("sampling", v)?;
        }
        for &r in s.mass_radii.iter().chain(&s.comparison_radii).chain(&s.comparison_taus) {
            positive("mass_radii/comparison_radii/comparison_taus", r)?;
        }
        positive("held_out_tolerance", s.held_out_tolerance)?;
        positive("quadrature_tolerance", s.quadrature_tolerance)?;
        positive("comparison_tolerance", s.comparison_tolerance)?;
        positive("closed_form_tolerance", s.closed_form_tolerance)?;
        positive("mass_tolerance", s.mass_tolerance)?;
        cfg.geometry()?;
        cfg.solver()?;
        Ok(())
    }

    fn execute(cfg: &Config<Self>, opts: &RunOptions, out: &mut Artifacts) -> Result<Checks> {
        let s = &cfg.suite;
        let model = cfg.geometry()?;
        let solver = cfg.solver()?;
        let grid = solver.time.grid()?;
        let flow = model_flow(model, &grid).context("evolving the metric")?;
        let cert = certify(&flow)?;
        let complex = Arc::new(build_complex_on_flow(&flow, s.ball_radius, &grid)?);
        let y = complex.basepoint();
        let field = solve_conjugate_forward_with(
            complex.clone(),
            y,
            grid.start(),
            BoundaryCondition::Neumann,
            grid.end(),
            &solver.options(),
        )
        .context("solving the kernel")?;
        let mass_trace = field.mass_trace();
        let record = GreenRecord {
            k: s.ball_radius,
            bc: BoundaryCondition::Neumann,
            source: (y, grid.start()),
            field,
            mass_trace,
            delta_prev: None,
        };
        let samples = gaussian_samples(&record, &s.sampling)?;
        let d_grid = s.sampling.d_grid();
        let fit = fit_samples(&samples, &d_grid)?;
        let held_out = held_out_inflation(&samples, &d_grid)?;
        let majorant = mass_integrability_check(&fit, cert.k0, model.dim(), grid.end() - grid.start())?;
        let sublinear = sublinear_mass_check(&record, &s.mass_radii)?;

        let mut csv = Csv::new(&["d", "c"]);
        for &(d, c) in &fit.profile {
            csv.row(&[fmt(d), fmt(c)]);
        }
        out.write("fit_profile.csv", csv.finish().as_bytes())?;
        let mut csv = Csv::new(&["radius", "max_mass"]);
        for &(r, m) in &sublinear.profile {
            csv.row(&[fmt(r), fmt(m)]);
        }
        out.write("mass_growth.csv", csv.finish().as_bytes())?;

        let mut checks = Checks::new(MASS, opts.tol_scale);
        checks.at_most("kernel_mass_error", record.mass_error(), s.mass_tolerance);
        checks.holds("mass_within_balls_bounded", sublinear.bounded);
        checks.statement(GAUSSIAN);
        checks.within("fitted_d", fit.d, s.d_range[0], s.d_range[1]);
        checks.within("fitted_c", fit.c, s.c_range[0], s.c_range[1]);
        checks.at_most("held_out_inflation", held_out, s.held_out_tolerance);
        checks.at_most("majorant_quadrature_agreement", majorant.self_agreement(), s.quadrature_tolerance);
        checks.holds("majorant_finite", majorant.value.is_finite());
        certificate_checks(&mut checks, &cert, "");
        checks.statement(VOLUME);
        let (vcsv, worst) =
            volume_comparison(&complex, cert.k0, cert.horizon, &s.comparison_radii, &s.comparison_taus)?;
        out.write("volume_comparison.csv", vcsv.as_bytes())?;
        checks.at_most("ball_volume_ratio_over_bound", worst, 1.0 + s.comparison_tolerance);
        checks.at_most("comparison_volume_closed_form", closed_form_deviation()?, s.closed_form_tolerance);

        out.write_json(
            "summary.json",
            &Summary {
                c: fit.c,
                d: fit.d,
                samples: fit.samples,
                held_out,
                majorant: majorant.value,
                c_prime: majorant.c_prime,
            },
        )?;
        Ok(checks)
    }
}

#[derive(Serialize)]
struct Summary {
    c: f64,
    d: f64,
    samples: usize,
    held_out: f64,
    majorant: f64,
    c_prime: f64,
}
