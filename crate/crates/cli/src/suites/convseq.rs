//! Kernels along a converging sequence of flows.

use anyhow::{bail, Context, Result};
use ricci_lab::convseq::{
    build_sequence, compare_on_compact, fit_kernels, solve_sequence_kernels, weak_identity_check, SequenceSpec,
};
use ricci_lab::geometry::LogProfile;
use ricci_lab::green::SampleSpec;
use serde::{Deserialize, Serialize};

use super::common::{certificate_checks, MASS, SEQUENCE};
use super::{RunOptions, Suite};
use crate::check::Checks;
use crate::config::{positive, Config};
use crate::output::{fmt, Artifacts, Csv};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvseqSuite {
    pub sequence: SequenceSpec,
    pub probe_radius: f64,
    /// Start of the comparison window in `τ`.
    pub window_start: f64,
    /// The window ends this many `h²` before the last node.
    pub window_end_cells: f64,
    pub final_delta_tolerance: f64,
    /// Member fits must satisfy `C_k <= bound C_∞` and `D_k <= bound D_∞`.
    pub fit_ratio_bound: f64,
    /// Allowed deviation of successive C⁰ chart-distance ratios from `ε_{k+1}/ε_k`.
    pub halving_tolerance: f64,
    pub mass_tolerance: f64,
    pub test_function: LogProfile,
    #[serde(default)]
    pub sampling: SampleSpec,
}

impl Suite for ConvseqSuite {
    fn validate(cfg: &Config<Self>) -> Result<()> {
        let s = &cfg.suite;
        s.sequence.validate()?;
        s.test_function.validate()?;
        for (name, v) in [
            ("probe_radius", s.probe_radius),
            ("window_start", s.window_start),
            ("final_delta_tolerance", s.final_delta_tolerance),
            ("fit_ratio_bound", s.fit_ratio_bound),
            ("halving_tolerance", s.halving_tolerance),
            ("mass_tolerance", s.mass_tolerance),
        ] {
            positive(name, v)?;
        }
        if s.window_end_cells.is_nan() || s.window_end_cells < 0.0 {
            bail!("suite.window_end_cells must be non-negative");
        }
        if s.probe_radius >= s.sequence.kernel_radius {
            bail!("suite.probe_radius must lie inside the kernel ball");
        }
        if cfg.geometry.is_some() {
            bail!("convseq experiments describe their geometry in [suite.sequence]");
        }
        let grid = cfg.solver()?.time.grid()?;
        if grid.start() != 0.0 {
            bail!("solver.time must start at τ = 0");
        }
        if s.window_start >= grid.end() {
            bail!("suite.window_start lies beyond the τ grid");
        }
        Ok(())
    }

    fn coarsen(cfg: &mut Config<Self>, factor: f64) {
        cfg.suite.sequence.resolution /= factor;
    }

    fn execute(cfg: &Config<Self>, opts: &RunOptions, out: &mut Artifacts) -> Result<Checks> {
        let s = &cfg.suite;
        let spec = &s.sequence;
        let solver = cfg.solver()?;
        let grid = solver.time.grid()?;
        let seq = build_sequence(spec).context("evolving the sequence")?;
        let kernels = solve_sequence_kernels(&seq, &grid).context("solving the kernels")?;
        let h = 1.0 / spec.resolution;
        let window = (s.window_start, grid.end() - s.window_end_cells * h * h);
        let table = compare_on_compact(&kernels, s.probe_radius, window)?;
        let fits = fit_kernels(&kernels, &s.sampling)?;
        let limit_fit = fits.last().expect("limit fit");
        let weak = weak_identity_check(&kernels.limit, &s.test_function, grid.end())?;
        let mut weak_members = true;
        for f in &kernels.fields {
            weak_members &= weak_identity_check(f, &s.test_function, grid.end())?.holds;
        }
        let mass = kernels.mass_errors();

        let mut csv = Csv::new(&[
            "k",
            "epsilon",
            "cutoff",
            "c0_distance",
            "c2_distance",
            "delta",
            "mass_error",
            "fit_c",
            "fit_d",
        ]);
        for (k, m) in seq.members.iter().enumerate() {
            csv.row(&[
                m.index.to_string(),
                fmt(m.epsilon),
                fmt(m.cutoff),
                fmt(m.c0_distance),
                fmt(m.c2_distance),
                fmt(table.rows[k].delta),
                fmt(mass[k]),
                fmt(fits[k].c),
                fmt(fits[k].d),
            ]);
        }
        out.write("sequence.csv", csv.finish().as_bytes())?;
        let mut wcsv = Csv::new(&["tau", "lhs", "bound"]);
        for r in &weak.rows {
            wcsv.row(&[fmt(r.tau), fmt(r.lhs), fmt(r.bound)]);
        }
        out.write("weak_identity.csv", wcsv.finish().as_bytes())?;

        let mut checks = Checks::new(MASS, opts.tol_scale);
        checks.at_most("kernel_mass_error", mass.iter().copied().fold(0.0, f64::max), s.mass_tolerance);
        checks.statement(SEQUENCE);
        checks.holds("delta_non_increasing", table.non_increasing());
        checks.at_most("final_delta", table.final_delta(), s.final_delta_tolerance);
        checks.holds("weak_identity_limit", weak.holds);
        checks.holds("weak_identity_members", weak_members);
        let (c_ratio, d_ratio) = fits[..fits.len() - 1]
            .iter()
            .fold((0.0f64, 0.0f64), |(c, d), f| (c.max(f.c / limit_fit.c), d.max(f.d / limit_fit.d)));
        checks.at_most("fit_c_over_limit", c_ratio, s.fit_ratio_bound);
        checks.at_most("fit_d_over_limit", d_ratio, s.fit_ratio_bound);
        let halving = seq
            .members
            .windows(2)
            .filter(|w| w[0].c0_distance > 0.0 && w[0].epsilon > 0.0)
            .map(|w| ((w[1].c0_distance / w[0].c0_distance) / (w[1].epsilon / w[0].epsilon) - 1.0).abs())
            .fold(0.0f64, f64::max);
        checks.at_most("c0_distance_tracks_epsilon", halving, s.halving_tolerance);
        for m in seq.members.iter().chain(std::iter::once(&seq.limit)) {
            certificate_checks(&mut checks, &m.certificate, &format!("member_{}_", m.index));
        }
        checks.statement(SEQUENCE);
        checks.at_most(
            "curvature_bound",
            seq.members.iter().map(|m| m.certificate.k0).fold(seq.limit.certificate.k0, f64::max),
            spec.curvature_bound,
        );

        out.write_json(
            "summary.json",
            &Summary {
                window,
                probe_cells: table.probe_cells,
                final_delta: table.final_delta(),
                limit_c: limit_fit.c,
                limit_d: limit_fit.d,
                common_equivalence: seq.common_equivalence(),
            },
        )?;
        Ok(checks)
    }
}

#[derive(Serialize)]
struct Summary {
    window: (f64, f64),
    probe_cells: usize,
    final_delta: f64,
    limit_c: f64,
    limit_d: f64,
    common_equivalence: f64,
}
