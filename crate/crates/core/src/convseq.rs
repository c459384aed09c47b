//! Sequences of pointed conformal Ricci flows converging to a limit flow,
//! their conjugate heat kernels with δ end data, and the convergence and
//! weak-identity diagnostics along the sequence.
//!
//! Member `k` has initial log-factor `w_∞ + ε_k · ψ` with `ψ` smoothly cut
//! off outside chart radius `A_k`; every member is evolved forward over
//! `[-α, 0]` on the common grid, and charts are identities fixing the
//! basepoint. Kernels are solved in `τ = -t` on the time-reversed flow.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flow::{certify, evolve_forward, reverse, FlowCertificate, FlowSolution};
use crate::geometry::{build_complex_on_flow, DiscreteComplex, GeometryModel, LogProfile, PlanarGrid};
use crate::green::{field_samples, fit_samples, GaussianFit, SampleSpec};
use crate::heat::{solve_conjugate_forward_with, BoundaryCondition, SolverOptions, SpaceTimeField};
use crate::time::TimeGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSpec {
    /// `w_∞` at `t = -α`.
    pub limit: LogProfile,
    pub perturbation: LogProfile,
    /// `ε_k`, strictly decreasing (or all zero).
    pub epsilons: Vec<f64>,
    /// `A_k`, strictly increasing.
    pub cutoff_radii: Vec<f64>,
    /// Width of the smooth transition outside `A_k`.
    pub flatten_width: f64,
    pub half_width: f64,
    pub resolution: f64,
    pub alpha: f64,
    /// Common curvature bound every member must respect.
    pub curvature_bound: f64,
    /// Radius of the ball the kernels are solved on.
    pub kernel_radius: f64,
}

impl SequenceSpec {
    pub fn count(&self) -> usize {
        self.epsilons.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.epsilons.len();
        if n < 3 {
            return Err(invalid("epsilons", "a sequence needs at least three members"));
        }
        if self.cutoff_radii.len() != n {
            return Err(invalid("cutoff_radii", "needs one radius per member"));
        }
        if self.epsilons.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(invalid("epsilons", "must be finite and non-negative"));
        }
        let all_zero = self.epsilons.iter().all(|e| *e == 0.0);
        if !all_zero && self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("epsilons", "must decrease strictly"));
        }
        if self.cutoff_radii.windows(2).any(|w| w[1] <= w[0]) || self.cutoff_radii[0] <= 0.0 {
            return Err(invalid("cutoff_radii", "must be positive and strictly increasing"));
        }
        for (name, v) in [
            ("flatten_width", self.flatten_width),
            ("half_width", self.half_width),
            ("resolution", self.resolution),
            ("alpha", self.alpha),
            ("curvature_bound", self.curvature_bound),
            ("kernel_radius", self.kernel_radius),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.kernel_radius >= self.half_width {
            return Err(invalid("kernel_radius", "must lie inside the grid"));
        }
        Ok(())
    }

    /// Initial log-factor of member `k` (0-based).
    pub fn member_profile(&self, k: usize) -> LogProfile {
        let eps = self.epsilons[k];
        if eps == 0.0 {
            return self.limit.clone();
        }
        let bump = LogProfile::Flattened {
            profile: Box::new(self.perturbation.clone()),
            radius: self.cutoff_radii[k],
            width: self.flatten_width,
        };
        LogProfile::Sum { terms: vec![self.limit.clone(), LogProfile::Scaled { factor: eps, profile: Box::new(bump) }] }
    }

    fn model(&self, profile: LogProfile) -> GeometryModel {
        GeometryModel::conformal(profile, self.half_width).with_resolution(self.resolution)
    }
}

#[derive(Clone, Debug)]
pub struct Member {
    /// 1-based position in the sequence; 0 for the limit.
    pub index: usize,
    pub epsilon: f64,
    pub cutoff: f64,
    /// Forward flow; parameter `s ∈ [0, α]` is time `t = s - α`.
    pub flow: FlowSolution,
    /// Backward flow in `τ = -t`, on which kernels are solved.
    pub kernel_flow: FlowSolution,
    pub certificate: FlowCertificate,
    /// `‖w_k - w_∞‖_{C⁰}` and `‖w_k - w_∞‖_{C²}` on the kernel ball over the
    /// sampled times; zero for the limit.
    pub c0_distance: f64,
    pub c2_distance: f64,
}

#[derive(Clone, Debug)]
pub struct Sequence {
    pub spec: SequenceSpec,
    pub members: Vec<Member>,
    pub limit: Member,
}

impl Sequence {
    /// Largest metric-equivalence constant `e^{α₃ α}` among members.
    pub fn common_equivalence(&self) -> f64 {
        self.members
            .iter()
            .chain(std::iter::once(&self.limit))
            .map(|m| (m.certificate.alpha3 * self.spec.alpha).exp())
            .fold(1.0, f64::max)
    }
}

fn evolve_member(
    spec: &SequenceSpec,
    index: usize,
    profile: LogProfile,
) -> Result<(FlowSolution, FlowSolution, FlowCertificate)> {
    let flow = evolve_forward(&spec.model(profile), spec.alpha)?;
    let kernel_flow = reverse(&flow);
    let certificate = certify(&kernel_flow)?;
    if certificate.k0 > spec.curvature_bound {
        return Err(Error::CurvatureBound { member: index, curvature: certificate.k0, bound: spec.curvature_bound });
    }
    Ok((flow, kernel_flow, certificate))
}

/// `max(|f|, |∂f|, |∂²f|)` over grid nodes within chart radius `radius`,
/// by centred differences.
fn chart_norms(grid: &PlanarGrid, f: &[f64], radius: f64) -> (f64, f64) {
    let side = grid.side();
    let h = grid.spacing;
    let (mut c0, mut c2) = (0.0f64, 0.0f64);
    for j in 1..side - 1 {
        for i in 1..side - 1 {
            let k = grid.index(i, j);
            let [x, y] = grid.coords(k);
            if x.hypot(y) > radius {
                continue;
            }
            let (l, r, d, u) = (f[k - 1], f[k + 1], f[k - side], f[k + side]);
            let fx = (r - l) / (2.0 * h);
            let fy = (u - d) / (2.0 * h);
            let fxx = (r - 2.0 * f[k] + l) / (h * h);
            let fyy = (u - 2.0 * f[k] + d) / (h * h);
            let fxy = (f[k + side + 1] - f[k + side - 1] - f[k - side + 1] + f[k - side - 1]) / (4.0 * h * h);
            c0 = c0.max(f[k].abs());
            c2 = c2.max(f[k].abs()).max(fx.abs()).max(fy.abs()).max(fxx.abs()).max(fyy.abs()).max(fxy.abs());
        }
    }
    (c0, c2)
}

/// Evolves every member and the limit, certifies the common curvature bound
/// and measures chart distances to the limit at five times in `[-α, 0]`.
/// Members are evolved concurrently.
pub fn build_sequence(spec: &SequenceSpec) -> Result<Sequence> {
    spec.validate()?;
    let count = spec.count();
    let results: Vec<Result<(FlowSolution, FlowSolution, FlowCertificate)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..=count)
            .map(|k| {
                let profile = if k == count { spec.limit.clone() } else { spec.member_profile(k) };
                let index = if k == count { 0 } else { k + 1 };
                scope.spawn(move || evolve_member(spec, index, profile))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("flow solve panicked")).collect()
    });
    let mut flows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (lflow, lkernel, lcert) = flows.pop().expect("limit flow");
    let grid = *lflow.planar_grid().expect("conformal flows live on a grid");
    let samples: Vec<f64> = (0..5).map(|i| spec.alpha * i as f64 / 4.0).collect();
    let limit_w: Vec<Vec<f64>> = samples.iter().map(|&s| lflow.log_factor(s)).collect::<Result<_>>()?;
    let mut members = Vec::with_capacity(count);
    for (k, (flow, kernel_flow, certificate)) in flows.into_iter().enumerate() {
        let (mut c0_distance, mut c2_distance) = (0.0f64, 0.0f64);
        for (s, wl) in samples.iter().zip(&limit_w) {
            let w = flow.log_factor(*s)?;
            let diff: Vec<f64> = w.iter().zip(wl).map(|(a, b)| a - b).collect();
            let (c0, c2) = chart_norms(&grid, &diff, spec.kernel_radius);
            c0_distance = c0_distance.max(c0);
            c2_distance = c2_distance.max(c2);
        }
        members.push(Member {
            index: k + 1,
            epsilon: spec.epsilons[k],
            cutoff: spec.cutoff_radii[k],
            flow,
            kernel_flow,
            certificate,
            c0_distance,
            c2_distance,
        });
    }
    let limit = Member {
        index: 0,
        epsilon: 0.0,
        cutoff: f64::INFINITY,
        flow: lflow,
        kernel_flow: lkernel,
        certificate: lcert,
        c0_distance: 0.0,
        c2_distance: 0.0,
    };
    Ok(Sequence { spec: spec.clone(), members, limit })
}

#[derive(Clone, Debug)]
pub struct KernelSequence {
    pub fields: Vec<SpaceTimeField>,
    pub limit: SpaceTimeField,
}

impl KernelSequence {
    /// `max_τ |m(τ) - 1|` per member, then for the limit.
    pub fn mass_errors(&self) -> Vec<f64> {
        self.fields
            .iter()
            .chain(std::iter::once(&self.limit))
            .map(|f| f.mass_trace().iter().fold(0.0f64, |a, m| a.max((m - 1.0).abs())))
            .collect()
    }
}

/// Kernels with δ data at the basepoint at `τ = 0`, Neumann conditions on
/// the ball of the spec's kernel radius, over `tau_grid ⊂ [0, α]`.
pub fn solve_sequence_kernels(seq: &Sequence, tau_grid: &TimeGrid) -> Result<KernelSequence> {
    if tau_grid.start() != 0.0 || tau_grid.end() > seq.spec.alpha * (1.0 + 1e-12) {
        return Err(invalid("tau_grid", "must start at 0 and end by α"));
    }
    let opts = SolverOptions::default();
    let radius = seq.spec.kernel_radius;
    let solve = |m: &Member| -> Result<SpaceTimeField> {
        let complex = Arc::new(build_complex_on_flow(&m.kernel_flow, radius, tau_grid)?);
        let y = complex.basepoint();
        solve_conjugate_forward_with(complex, y, 0.0, BoundaryCondition::Neumann, tau_grid.end(), &opts)
    };
    let mut solved: Vec<Result<SpaceTimeField>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            seq.members.iter().chain(std::iter::once(&seq.limit)).map(|m| scope.spawn(move || solve(m))).collect();
        handles.into_iter().map(|h| h.join().expect("kernel solve panicked")).collect()
    });
    let limit = solved.pop().expect("limit kernel")?;
    let fields = solved.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(KernelSequence { fields, limit })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub k: usize,
    /// `sup |u_k - u_∞|` over the probe region and window.
    pub delta: f64,
    /// `δ_k / δ_{k-1}`; NaN on the first row.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub rows: Vec<DeltaRow>,
    pub probe_cells: usize,
}

impl DeltaTable {
    pub fn non_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].delta <= w[0].delta)
    }

    pub fn final_delta(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.delta)
    }
}

/// Cells of the limit kernel's complex within chart radius `probe_radius`,
/// away from the boundary collar.
fn probe_cells(complex: &DiscreteComplex, probe_radius: f64) -> Vec<usize> {
    (0..complex.len())
        .filter(|&i| {
            complex.chart_radius(i) <= probe_radius
                && !complex.cells()[i].boundary
                && complex.neighbours(i).iter().all(|&(j, _)| !complex.cells()[j].boundary)
        })
        .collect()
}

/// Sup-distance of each member kernel to the limit kernel over chart radius
/// `probe_radius` and `τ ∈ [window.0, window.1]`.
pub fn compare_on_compact(kernels: &KernelSequence, probe_radius: f64, window: (f64, f64)) -> Result<DeltaTable> {
    let (t1, t2) = window;
    if !(t1 > 0.0 && t2 >= t1) {
        return Err(invalid("window", "must satisfy 0 < t1 <= t2"));
    }
    let lc = kernels.limit.complex();
    if t2 > lc.times().end() * (1.0 + 1e-12) {
        return Err(invalid("window", "ends after the kernels"));
    }
    let cells = probe_cells(lc, probe_radius);
    if cells.is_empty() {
        return Err(invalid("probe_radius", "probe region contains no cells"));
    }
    let mut rows: Vec<DeltaRow> = Vec::with_capacity(kernels.fields.len());
    for (k, f) in kernels.fields.iter().enumerate() {
        let map: Vec<usize> = cells
            .iter()
            .map(|&i| {
                f.complex()
                    .cell_by_key(lc.cells()[i].key)
                    .ok_or_else(|| invalid("probe_radius", format!("probe leaves the ball of member {}", k + 1)))
            })
            .collect::<Result<_>>()?;
        let mut delta = 0.0f64;
        for (m, &t) in kernels.limit.times().iter().enumerate() {
            if t < t1 * (1.0 - 1e-12) || t > t2 * (1.0 + 1e-12) {
                continue;
            }
            let (ul, uk) = (kernels.limit.at(m), f.at(f.local_index(t)?));
            for (&i, &j) in cells.iter().zip(&map) {
                delta = delta.max((uk[j] - ul[i]).abs());
            }
        }
        let ratio = rows.last().map_or(f64::NAN, |r| delta / r.delta);
        rows.push(DeltaRow { k: k + 1, delta, ratio });
    }
    Ok(DeltaTable { rows, probe_cells: cells.len() })
}

/// Gaussian-bound fits of every member kernel and of the limit (last).
pub fn fit_kernels(kernels: &KernelSequence, spec: &SampleSpec) -> Result<Vec<GaussianFit>> {
    let grid = spec.d_grid();
    kernels
        .fields
        .iter()
        .chain(std::iter::once(&kernels.limit))
        .map(|f| {
            let source = (f.complex().basepoint(), f.time(0));
            fit_samples(&field_samples(f, source, spec)?, &grid)
        })
        .collect()
}

/// One row of the sequence report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub k: usize,
    pub epsilon: f64,
    pub cutoff: f64,
    pub chart_distance: f64,
    pub delta: f64,
    pub mass_error: f64,
    pub fit_c: f64,
    pub fit_d: f64,
}

pub fn sequence_rows(
    seq: &Sequence,
    kernels: &KernelSequence,
    table: &DeltaTable,
    fits: &[GaussianFit],
) -> Vec<SequenceRow> {
    let mass = kernels.mass_errors();
    seq.members
        .iter()
        .enumerate()
        .map(|(k, m)| SequenceRow {
            k: m.index,
            epsilon: m.epsilon,
            cutoff: m.cutoff,
            chart_distance: m.c2_distance,
            delta: table.rows[k].delta,
            mass_error: mass[k],
            fit_c: fits[k].c,
            fit_d: fits[k].d,
        })
        .collect()
}

/// Smallest `L` with `δ_k <= L ‖w_k - w_∞‖_{C²}` over the run; NaN when no
/// member differs from the limit.
pub fn lipschitz_constant(seq: &Sequence, table: &DeltaTable) -> f64 {
    seq.members
        .iter()
        .zip(&table.rows)
        .filter(|(m, _)| m.c2_distance > 0.0)
        .map(|(m, r)| r.delta / m.c2_distance)
        .fold(f64::NAN, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakIdentityRow {
    pub tau: f64,
    /// `|Σ u_i ψ_i V_i(τ) - ψ(x_∞)|`.
    pub lhs: f64,
    /// `τ · max_{[0, τ]} max_i |Δψ|_i`.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakIdentity {
    pub rows: Vec<WeakIdentityRow>,
    pub holds: bool,
}

/// Weak form of the δ limit for a kernel with source at `τ = field.time(0)`:
/// `|∫ u ψ dV - ψ(x_∞)| <= τ max |Δψ|` for every stored `τ <= tau_max`,
/// with `Δ` the discrete Laplacian of the evolving metric. `psi` is sampled
/// at chart coordinates and must vanish on the boundary cells.
pub fn weak_identity_check(field: &SpaceTimeField, psi: &LogProfile, tau_max: f64) -> Result<WeakIdentity> {
    let complex = field.complex();
    let values: Vec<f64> = complex.cells().iter().map(|c| psi.value(c.position[0], c.position[1])).collect();
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let clipped =
        complex.cells().iter().zip(&values).filter(|(c, _)| c.boundary).fold(0.0f64, |a, (_, v)| a.max(v.abs()));
    if clipped > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::SupportClipped { value: clipped });
    }
    let y = complex.basepoint();
    let at_source = values[y];
    let s = field.time(0);
    let mut rows = Vec::new();
    let mut lap_sup = 0.0f64;
    for k in 0..field.n_times() {
        let tau = field.time(k) - s;
        if tau > tau_max * (1.0 + 1e-12) {
            break;
        }
        let m = field.node(k);
        lap_sup = lap_sup.max(complex.laplacian(m, &values).iter().fold(0.0f64, |a, v| a.max(v.abs())));
        let v = complex.volumes_at(m);
        let integral: f64 = field.at(k).iter().zip(&values).zip(v).map(|((u, p), v)| u * p * v).sum();
        rows.push(WeakIdentityRow { tau, lhs: (integral - at_source).abs(), bound: tau * lap_sup });
    }
    let holds = rows.iter().all(|r| r.lhs <= r.bound * (1.0 + 1e-9) + 1e-12 * scale);
    Ok(WeakIdentity { rows, holds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SequenceSpec {
        SequenceSpec {
            limit: LogProfile::Zero,
            perturbation: LogProfile::Gaussian { amplitude: 0.1, width: 0.5, center: [0.3, 0.0] },
            epsilons: vec![0.5, 0.25, 0.125],
            cutoff_radii: vec![1.0, 1.2, 1.4],
            flatten_width: 0.4,
            half_width: 2.5,
            resolution: 8.0,
            alpha: 0.2,
            curvature_bound: 10.0,
            kernel_radius: 2.0,
        }
    }

    #[test]
    fn validation_rejects_bad_sequences() {
        let mut s = spec();
        s.epsilons = vec![0.5, 0.5, 0.1];
        assert!(s.validate().is_err());
        let mut s = spec();
        s.cutoff_radii = vec![1.0, 0.9, 1.4];
        assert!(s.validate().is_err());
        let mut s = spec();
        s.epsilons = vec![0.0; 3];
        assert!(s.validate().is_ok());
    }

    #[test]
    fn members_are_perturbations_of_the_limit() {
        let s = spec();
        let p = s.member_profile(0);
        assert!((p.value(0.3, 0.0) - 0.05).abs() < 1e-12);
        assert_eq!(p.value(2.0, 0.0), 0.0);
    }

    #[test]
    fn chart_norms_of_a_quadratic() {
        let grid = PlanarGrid::new(1.0, 16.0);
        let f: Vec<f64> = (0..grid.len()).map(|k| 0.5 * grid.coords(k)[0].powi(2)).collect();
        let (c0, c2) = chart_norms(&grid, &f, 0.5);
        assert!((c0 - 0.125).abs() < 1e-2);
        assert!((c2 - 1.0).abs() < 1e-10);
    }
}
