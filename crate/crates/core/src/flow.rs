//! Ricci flow of the model metrics, backward flows by time reversal, and
//! certification of curvature and metric-velocity bounds.
//!
//! In two dimensions `g = e^{2w} δ` evolves by `∂_t g = -2 Ric = -2K g`, i.e.
//! `∂_t w = -K = e^{-2w} Δw`. The planar solver integrates this with
//! variable-step BDF2 and a damped Newton iteration on the full grid, holding
//! `w = 0` on the outer ring.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::planar::{fast_marching, PlanarGrid};
use crate::geometry::{GeometryModel, LogProfile, ModelKind, SPHERE_RADIUS_SQ};
use crate::linalg::{self, CsrMatrix, LinearSolverOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FlowData {
    Flat,
    /// `g = scale · h₀` with `scale = offset + rate · s` in forward time `s`.
    Sphere {
        offset: f64,
        rate: f64,
    },
    /// Stored solution nodes `(s_m, w(·, s_m))`, linearly interpolated.
    Conformal {
        grid: PlanarGrid,
        times: Vec<f64>,
        w: Vec<Vec<f64>>,
        residuals: Vec<f64>,
    },
    /// `w(x, s) = profile(x) cos(omega s)`.
    Prescribed {
        grid: PlanarGrid,
        profile: LogProfile,
        omega: f64,
        base: Vec<f64>,
    },
}

/// A metric family on `[start, start + horizon]`.
///
/// Data is stored in the forward parametrisation `s ∈ [0, horizon]`; a
/// reversed solution reads it at `s = horizon - (t - start)`. Reversal only
/// toggles a flag, so it is an exact involution.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSolution {
    model: GeometryModel,
    direction: Direction,
    start: f64,
    horizon: f64,
    reversed: bool,
    data: FlowData,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    /// Largest time step.
    pub dt: f64,
    /// Newton stopping threshold on the max-norm update.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Steps are halved at most this many times before giving up.
    pub max_halvings: usize,
    /// Abort when `sup |K|` exceeds this value.
    pub curvature_guard: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { dt: 5e-3, newton_tol: 1e-10, max_newton: 30, max_halvings: 12, curvature_guard: 1e4 }
    }
}

impl FlowSolution {
    /// The closed-form or prescribed metric family of `model` itself,
    /// without any Ricci-flow solve. Conformal models are returned frozen at `w₀`.
    pub fn from_model(model: &GeometryModel, start: f64, horizon: f64) -> Result<Self> {
        model.validate()?;
        let (direction, data) = match &model.kind {
            ModelKind::FlatEuclidean { .. } => (Direction::Forward, FlowData::Flat),
            ModelKind::SphereBackwardFlow => (Direction::Backward, FlowData::Sphere { offset: 1.0 + start, rate: 1.0 }),
            ModelKind::ConformalPlaneFlow { initial } => {
                let grid = model.planar_grid()?;
                let w = grid.sample(initial);
                (Direction::Forward, FlowData::Conformal { grid, times: vec![0.0], w: vec![w], residuals: vec![0.0] })
            }
            ModelKind::PrescribedFamily { profile, omega } => {
                let grid = model.planar_grid()?;
                let base = grid.sample(profile);
                (Direction::Forward, FlowData::Prescribed { grid, profile: profile.clone(), omega: *omega, base })
            }
        };
        let sol = Self { model: model.clone(), direction, start, horizon, reversed: false, data };
        if let FlowData::Sphere { .. } = sol.data {
            if start <= -1.0 {
                return Err(Error::OutsideLifespan { time: start, start: -1.0, end: f64::INFINITY });
            }
        }
        Ok(sol)
    }

    pub fn model(&self) -> &GeometryModel {
        &self.model
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn end(&self) -> f64 {
        self.start + self.horizon
    }

    pub fn data(&self) -> &FlowData {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn is_static(&self) -> bool {
        match &self.data {
            FlowData::Flat => true,
            FlowData::Conformal { w, .. } => w.iter().all(|wm| wm == &w[0]),
            FlowData::Prescribed { omega, base, .. } => *omega == 0.0 || base.iter().all(|v| *v == 0.0),
            FlowData::Sphere { rate, .. } => *rate == 0.0,
        }
    }

    /// Same metric family on `[new_start, new_start + horizon]`.
    pub fn shifted_to(&self, new_start: f64) -> Self {
        let mut s = self.clone();
        s.start = new_start;
        s
    }

    fn forward_param(&self, t: f64) -> Result<f64> {
        let s = t - self.start;
        let tol = 1e-9 * (1.0 + self.horizon.abs() + t.abs());
        if s < -tol || s > self.horizon + tol {
            return Err(Error::OutsideLifespan { time: t, start: self.start, end: self.end() });
        }
        let s = s.clamp(0.0, self.horizon);
        Ok(if self.reversed { self.horizon - s } else { s })
    }

    /// Sign of `∂_t` in the solution's own parametrisation relative to the stored one.
    fn time_sign(&self) -> f64 {
        if self.reversed {
            -1.0
        } else {
            1.0
        }
    }

    pub fn planar_grid(&self) -> Option<&PlanarGrid> {
        match &self.data {
            FlowData::Conformal { grid, .. } | FlowData::Prescribed { grid, .. } => Some(grid),
            _ => None,
        }
    }

    /// Sphere scale factor `g(t) = scale · h₀`.
    pub fn sphere_scale(&self, t: f64) -> Result<f64> {
        match self.data {
            FlowData::Sphere { offset, rate } => {
                let s = self.forward_param(t)?;
                let scale = offset + rate * s;
                if scale <= 0.0 {
                    return Err(Error::OutsideLifespan { time: t, start: self.start, end: self.end() });
                }
                Ok(scale)
            }
            _ => Err(invalid("flow", "not a sphere flow")),
        }
    }

    /// `d/dt scale` in the solution's own time.
    pub fn sphere_scale_rate(&self) -> Option<f64> {
        match self.data {
            FlowData::Sphere { rate, .. } => Some(rate * self.time_sign()),
            _ => None,
        }
    }

    /// Log-conformal factor on the planar grid at time `t`.
    pub fn log_factor(&self, t: f64) -> Result<Vec<f64>> {
        let s = self.forward_param(t)?;
        match &self.data {
            FlowData::Conformal { times, w, .. } => {
                if times.len() == 1 {
                    return Ok(w[0].clone());
                }
                let m = times.partition_point(|&x| x <= s).clamp(1, times.len() - 1);
                let (t0, t1) = (times[m - 1], times[m]);
                let theta = ((s - t0) / (t1 - t0)).clamp(0.0, 1.0);
                if theta == 0.0 {
                    return Ok(w[m - 1].clone());
                }
                if theta == 1.0 {
                    return Ok(w[m].clone());
                }
                Ok(w[m - 1].iter().zip(&w[m]).map(|(a, b)| a + theta * (b - a)).collect())
            }
            FlowData::Prescribed { omega, base, .. } => {
                let c = (omega * s).cos();
                Ok(base.iter().map(|b| b * c).collect())
            }
            _ => Err(invalid("flow", "not a planar flow")),
        }
    }

    /// Stored time nodes in the solution's own parametrisation, increasing.
    pub fn nodes(&self) -> Vec<f64> {
        let stored: Vec<f64> = match &self.data {
            FlowData::Conformal { times, .. } if times.len() > 1 => times.clone(),
            _ => vec![0.0, self.horizon],
        };
        let mut out: Vec<f64> =
            stored.iter().map(|s| if self.reversed { self.start + self.horizon - s } else { self.start + s }).collect();
        out.sort_by(f64::total_cmp);
        out
    }

    /// `(t, sup |Rm|)` at every stored node.
    pub fn curvature_trace(&self) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::new();
        for t in self.nodes() {
            let k = match &self.data {
                FlowData::Flat => 0.0,
                FlowData::Sphere { .. } => 1.0 / (SPHERE_RADIUS_SQ * self.sphere_scale(t)?),
                FlowData::Conformal { grid, .. } | FlowData::Prescribed { grid, .. } => {
                    grid.gauss_curvature(&self.log_factor(t)?).iter().fold(0.0f64, |a, k| a.max(k.abs()))
                }
            };
            out.push((t, k));
        }
        Ok(out)
    }

    /// Largest Newton residual of `∂_t w - e^{-2w} Δ_h w` over accepted steps.
    pub fn max_step_residual(&self) -> f64 {
        match &self.data {
            FlowData::Conformal { residuals, .. } => residuals.iter().fold(0.0, |a, r| a.max(*r)),
            _ => 0.0,
        }
    }

    /// Columnar snapshot export: `time node x y w K`.
    pub fn snapshot_text(&self, times: &[f64]) -> Result<String> {
        let mut s = String::from("# time node x y w K\n");
        match &self.data {
            FlowData::Conformal { grid, .. } | FlowData::Prescribed { grid, .. } => {
                for &t in times {
                    let w = self.log_factor(t)?;
                    let k = grid.gauss_curvature(&w);
                    for i in 0..grid.len() {
                        let [x, y] = grid.coords(i);
                        let _ = writeln!(s, "{t:.16e} {i} {x:.16e} {y:.16e} {:.16e} {:.16e}", w[i], k[i]);
                    }
                }
            }
            FlowData::Sphere { .. } => {
                for &t in times {
                    let scale = self.sphere_scale(t)?;
                    let w = 0.5 * scale.ln();
                    let k = 1.0 / (SPHERE_RADIUS_SQ * scale);
                    let _ = writeln!(s, "{t:.16e} 0 0 0 {w:.16e} {k:.16e}");
                }
            }
            FlowData::Flat => {
                for &t in times {
                    let _ = writeln!(s, "{t:.16e} 0 0 0 0 0");
                }
            }
        }
        Ok(s)
    }
}

/// Evolves `model` by forward Ricci flow on `[0, horizon]` with default options.
pub fn evolve_forward(model: &GeometryModel, horizon: f64) -> Result<FlowSolution> {
    evolve_forward_with(model, horizon, &FlowOptions::default())
}

pub fn evolve_forward_with(model: &GeometryModel, horizon: f64, opts: &FlowOptions) -> Result<FlowSolution> {
    model.validate()?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(invalid("horizon", format!("must be positive, got {horizon}")));
    }
    match &model.kind {
        ModelKind::FlatEuclidean { .. } => Ok(FlowSolution {
            model: model.clone(),
            direction: Direction::Forward,
            start: 0.0,
            horizon,
            reversed: false,
            data: FlowData::Flat,
        }),
        ModelKind::SphereBackwardFlow => {
            // the shrinking sphere (1 - t) h₀ becomes extinct at t = 1
            if horizon >= 1.0 {
                return Err(Error::OutsideLifespan { time: horizon, start: 0.0, end: 1.0 });
            }
            Ok(FlowSolution {
                model: model.clone(),
                direction: Direction::Forward,
                start: 0.0,
                horizon,
                reversed: false,
                data: FlowData::Sphere { offset: 1.0, rate: -1.0 },
            })
        }
        ModelKind::PrescribedFamily { .. } => {
            let mut sol = FlowSolution::from_model(model, 0.0, horizon)?;
            sol.horizon = horizon;
            Ok(sol)
        }
        ModelKind::ConformalPlaneFlow { initial } => {
            let grid = model.planar_grid()?;
            let mut w0 = grid.sample(initial);
            for (k, v) in w0.iter_mut().enumerate() {
                if grid.on_edge(k) {
                    *v = 0.0;
                }
            }
            let (times, w, residuals) = solve_conformal(&grid, w0, horizon, opts)?;
            Ok(FlowSolution {
                model: model.clone(),
                direction: Direction::Forward,
                start: 0.0,
                horizon,
                reversed: false,
                data: FlowData::Conformal { grid, times, w, residuals },
            })
        }
    }
}

/// Backward flow `g_back(t) = g_fwd(start + end - t)`, and vice versa.
pub fn reverse(flow: &FlowSolution) -> FlowSolution {
    let mut out = flow.clone();
    out.reversed = !flow.reversed;
    out.direction = match flow.direction {
        Direction::Forward => Direction::Backward,
        Direction::Backward => Direction::Forward,
    };
    out
}

struct ConformalSystem<'a> {
    grid: &'a PlanarGrid,
    interior: Vec<usize>,
    slot: Vec<usize>,
    matrix: CsrMatrix,
}

impl<'a> ConformalSystem<'a> {
    fn new(grid: &'a PlanarGrid) -> Self {
        let interior: Vec<usize> = (0..grid.len()).filter(|&k| !grid.on_edge(k)).collect();
        let mut slot = vec![usize::MAX; grid.len()];
        for (a, &k) in interior.iter().enumerate() {
            slot[k] = a;
        }
        let rows: Vec<Vec<usize>> = interior
            .iter()
            .map(|&k| grid.neighbours(k).filter(|&nb| slot[nb] != usize::MAX).map(|nb| slot[nb]).collect())
            .collect();
        let matrix = CsrMatrix::with_pattern(&rows);
        Self { grid, interior, slot, matrix }
    }

    /// One implicit step `e^{2w}(c0 w + hist)/dt = Δ_h w`. Returns the new
    /// field and the final residual in the form `∂_t w - e^{-2w} Δ_h w`.
    fn step(&mut self, guess: &[f64], hist: &[f64], c0: f64, dt: f64, opts: &FlowOptions) -> Option<(Vec<f64>, f64)> {
        let mut w = guess.to_vec();
        let inv_h2 = 1.0 / (self.grid.spacing * self.grid.spacing);
        let lin = LinearSolverOptions { rel_tol: 1e-12, ..Default::default() };
        let residual = |w: &[f64]| -> Vec<f64> {
            let lap = self.grid.laplacian(w);
            self.interior.iter().map(|&k| (2.0 * w[k]).exp() * (c0 * w[k] + hist[k]) / dt - lap[k]).collect()
        };
        let mut g = residual(&w);
        for _ in 0..opts.max_newton {
            self.matrix.clear();
            for (a, &k) in self.interior.iter().enumerate() {
                let e = (2.0 * w[k]).exp();
                let diag = e * (2.0 * (c0 * w[k] + hist[k]) + c0) / dt + 4.0 * inv_h2;
                self.matrix.add(a, a, diag);
                for nb in self.grid.neighbours(k) {
                    let b = self.slot[nb];
                    if b != usize::MAX {
                        self.matrix.add(a, b, -inv_h2);
                    }
                }
            }
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let mut delta = vec![0.0; rhs.len()];
            linalg::solve(&self.matrix, &rhs, &mut delta, true, &lin).ok()?;
            let g_norm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if delta.iter().fold(0.0f64, |a, v| a.max(v.abs())) <= opts.newton_tol {
                // converged to round-off: the residual can no longer decrease reliably
                for (a, &k) in self.interior.iter().enumerate() {
                    w[k] += delta[a];
                }
                let g = residual(&w);
                let res =
                    self.interior.iter().zip(&g).fold(0.0f64, |a, (&k, gk)| a.max((gk * (-2.0 * w[k]).exp()).abs()));
                return Some((w, res));
            }
            let mut damping = 1.0;
            let mut accepted = false;
            for _ in 0..8 {
                let mut trial = w.clone();
                for (a, &k) in self.interior.iter().enumerate() {
                    trial[k] += damping * delta[a];
                }
                let g_trial = residual(&trial);
                let t_norm = g_trial.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if t_norm.is_finite() && (t_norm < g_norm || g_norm < 1e-300 || damping < 0.02) {
                    w = trial;
                    g = g_trial;
                    accepted = true;
                    break;
                }
                damping *= 0.5;
            }
            if !accepted {
                return None;
            }
            let step = delta.iter().fold(0.0f64, |a, v| a.max(v.abs())) * damping;
            if step <= opts.newton_tol && damping == 1.0 {
                let res =
                    self.interior.iter().zip(&g).fold(0.0f64, |a, (&k, gk)| a.max((gk * (-2.0 * w[k]).exp()).abs()));
                return Some((w, res));
            }
        }
        None
    }
}

type ConformalTrajectory = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

fn solve_conformal(grid: &PlanarGrid, w0: Vec<f64>, horizon: f64, opts: &FlowOptions) -> Result<ConformalTrajectory> {
    let mut sys = ConformalSystem::new(grid);
    let mut times = vec![0.0];
    let mut ws = vec![w0];
    let mut residuals = vec![0.0];
    let mut t = 0.0;
    let mut dt = opts.dt.min(horizon);
    let mut halvings = 0;
    if ws[0].iter().all(|v| *v == 0.0) {
        let w0 = ws.pop().unwrap();
        return Ok((vec![0.0, horizon], vec![w0.clone(), w0], vec![0.0, 0.0]));
    }
    while t < horizon * (1.0 - 1e-14) {
        let mut step = dt.min(horizon - t);
        if horizon - t - step < 1e-9 * step {
            step = horizon - t;
        }
        let n = ws.len();
        let cur = &ws[n - 1];
        let (c0, hist, guess): (f64, Vec<f64>, Vec<f64>) = if n == 1 {
            (1.0, cur.iter().map(|v| -v).collect(), cur.clone())
        } else {
            let prev = &ws[n - 2];
            let omega = step / (times[n - 1] - times[n - 2]);
            let c0 = (1.0 + 2.0 * omega) / (1.0 + omega);
            let c1 = -(1.0 + omega);
            let c2 = omega * omega / (1.0 + omega);
            let hist = cur.iter().zip(prev).map(|(a, b)| c1 * a + c2 * b).collect();
            let guess = cur.iter().zip(prev).map(|(a, b)| a + omega * (a - b)).collect();
            (c0, hist, guess)
        };
        match sys.step(&guess, &hist, c0, step, opts) {
            Some((w, res)) => {
                let k_sup = grid.gauss_curvature(&w).iter().fold(0.0f64, |a, k| a.max(k.abs()));
                if !(k_sup <= opts.curvature_guard) {
                    return Err(Error::CurvatureBlowUp {
                        time: t + step,
                        curvature: k_sup,
                        guard: opts.curvature_guard,
                    });
                }
                t += step;
                times.push(t);
                ws.push(w);
                residuals.push(res);
                halvings = 0;
                if dt < opts.dt {
                    dt = (2.0 * dt).min(opts.dt);
                }
            }
            None => {
                halvings += 1;
                if halvings > opts.max_halvings {
                    return Err(Error::FlowNonConvergence { time: t, step });
                }
                dt = step * 0.5;
            }
        }
    }
    *times.last_mut().unwrap() = horizon;
    Ok((times, ws, residuals))
}

/// Verified bounds for a flow: curvature `k0`, metric velocity `alpha3`, and
/// the derived equivalence factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowCertificate {
    pub dim: usize,
    pub k0: f64,
    pub alpha3: f64,
    /// `alpha3 = 2 (n - 1) k0` holds by construction (Ricci flows).
    pub ricci: bool,
    pub horizon: f64,
    /// `e^{alpha3 T / 2}`: distance equivalence factor.
    pub distance_factor: f64,
    /// `e^{n alpha3 T / 2}`: volume-element equivalence factor.
    pub volume_factor: f64,
    pub samples: usize,
    /// Largest observed `|log(ratio)| / log(band)` for each sampled band;
    /// certification requires all of them to be at most 1.
    pub metric_usage: f64,
    pub distance_usage: f64,
    pub volume_usage: f64,
}

impl FlowCertificate {
    /// `[e^{-alpha3 |t - s|}, e^{alpha3 |t - s|}]`.
    pub fn metric_band(&self, gap: f64) -> (f64, f64) {
        let e = (self.alpha3 * gap.abs()).exp();
        (1.0 / e, e)
    }

    pub fn to_text(&self) -> String {
        format!(
            "dim = {}\nk0 = {:.16e}\nalpha3 = {:.16e}\nricci = {}\nhorizon = {:.16e}\ndistance_factor = {:.16e}\nvolume_factor = {:.16e}\nsamples = {}\nmetric_usage = {:.16e}\ndistance_usage = {:.16e}\nvolume_usage = {:.16e}\n",
            self.dim,
            self.k0,
            self.alpha3,
            self.ricci,
            self.horizon,
            self.distance_factor,
            self.volume_factor,
            self.samples,
            self.metric_usage,
            self.distance_usage,
            self.volume_usage
        )
    }
}

/// `(k0, alpha3, ricci)` without any sampling.
pub fn flow_bounds(flow: &FlowSolution) -> Result<(f64, f64, bool)> {
    let n = flow.dim() as f64;
    match flow.data() {
        FlowData::Flat => Ok((0.0, 0.0, true)),
        FlowData::Sphere { .. } => {
            let s0 = flow.sphere_scale(flow.start())?;
            let s1 = flow.sphere_scale(flow.end())?;
            let k0 = 1.0 / (SPHERE_RADIUS_SQ * s0.min(s1));
            Ok((k0, 2.0 * (n - 1.0) * k0, true))
        }
        FlowData::Conformal { grid, times, w, .. } => {
            let mut k0 = 0.0f64;
            for wm in w {
                k0 = k0.max(grid.gauss_curvature(wm).iter().fold(0.0f64, |a, k| a.max(k.abs())));
            }
            // |∂_t w| = |K| for the flow; using the secant slopes as well makes
            // the metric bands exact for the interpolated data
            for m in 1..times.len() {
                let dt = times[m] - times[m - 1];
                let slope = w[m].iter().zip(&w[m - 1]).fold(0.0f64, |a, (x, y)| a.max((x - y).abs() / dt));
                k0 = k0.max(slope);
            }
            Ok((k0, 2.0 * (n - 1.0) * k0, true))
        }
        FlowData::Prescribed { grid, omega, base, .. } => {
            let sup_w = base.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let lap_sup = grid.laplacian(base).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            // |K| = e^{-2w} |Δw| <= e^{2 sup|w|} sup|Δ base|
            let k0 = lap_sup * (2.0 * sup_w).exp();
            Ok((k0, 2.0 * omega.abs() * sup_w, false))
        }
    }
}

pub const CERTIFY_SAMPLES: usize = 1000;
const CERTIFY_SEED: u64 = 0x5eed_f10e;

/// Computes `k0` and `alpha3` and re-checks the metric, distance and volume
/// equivalence bands on `CERTIFY_SAMPLES` random space-time samples each.
pub fn certify(flow: &FlowSolution) -> Result<FlowCertificate> {
    certify_with(flow, CERTIFY_SAMPLES, CERTIFY_SEED)
}

pub fn certify_with(flow: &FlowSolution, samples: usize, seed: u64) -> Result<FlowCertificate> {
    let (k0, alpha3, ricci) = flow_bounds(flow)?;
    let n = flow.dim() as f64;
    let horizon = flow.horizon();
    let mut cert = FlowCertificate {
        dim: flow.dim(),
        k0,
        alpha3,
        ricci,
        horizon,
        distance_factor: (alpha3 * horizon / 2.0).exp(),
        volume_factor: (n * alpha3 * horizon / 2.0).exp(),
        samples,
        metric_usage: 0.0,
        distance_usage: 0.0,
        volume_usage: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (flow.start(), flow.end());
    let slack = 1e-12;
    let usage = |ratio: f64, band: f64| -> f64 {
        let l = ratio.ln().abs();
        if band <= 0.0 {
            if l <= slack {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            l / band
        }
    };
    let fail = |what: &str, detail: String| Error::Certification(format!("{what} band violated: {detail}"));

    // metric ratio g_t / g_s at a point, and volume ratio dV_t / dV_s
    match flow.data() {
        FlowData::Flat => {}
        FlowData::Sphere { .. } => {
            for _ in 0..samples {
                let (s, t) = (rng.random_range(a..=b), rng.random_range(a..=b));
                let ratio = flow.sphere_scale(t)? / flow.sphere_scale(s)?;
                let u = usage(ratio, alpha3 * (t - s).abs());
                cert.metric_usage = cert.metric_usage.max(u);
                if u > 1.0 + slack {
                    return Err(fail("metric", format!("s = {s}, t = {t}, ratio = {ratio}")));
                }
                let vu = usage(ratio.powf(n / 2.0), n * alpha3 * horizon / 2.0);
                cert.volume_usage = cert.volume_usage.max(vu);
                if vu > 1.0 + slack {
                    return Err(fail("volume", format!("s = {s}, t = {t}")));
                }
                let du = usage(ratio.sqrt(), alpha3 * horizon / 2.0);
                cert.distance_usage = cert.distance_usage.max(du);
                if du > 1.0 + slack {
                    return Err(fail("distance", format!("t = {t}")));
                }
            }
        }
        FlowData::Conformal { grid, .. } | FlowData::Prescribed { grid, .. } => {
            let grid = *grid;
            let n_cells = grid.len();
            let time_batches = 10usize;
            let per_batch = samples.div_ceil(time_batches);
            let base_t = a;
            let w_base = flow.log_factor(base_t)?;
            let active = vec![true; n_cells];
            let source = grid.nearest(flow.model().basepoint).ok_or_else(|| invalid("basepoint", "outside grid"))?;
            let f_base: Vec<f64> = w_base.iter().map(|w| w.exp()).collect();
            let d_base = fast_marching(&grid, &f_base, &active, source);
            for _ in 0..time_batches {
                let (s, t) = (rng.random_range(a..=b), rng.random_range(a..=b));
                let ws = flow.log_factor(s)?;
                let wt = flow.log_factor(t)?;
                let f_t: Vec<f64> = wt.iter().map(|w| w.exp()).collect();
                let d_t = fast_marching(&grid, &f_t, &active, source);
                for _ in 0..per_batch {
                    let x = rng.random_range(0..n_cells);
                    let ratio = (2.0 * (wt[x] - ws[x])).exp();
                    let u = usage(ratio, alpha3 * (t - s).abs());
                    cert.metric_usage = cert.metric_usage.max(u);
                    if u > 1.0 + 1e-9 {
                        return Err(fail("metric", format!("x = {x}, s = {s}, t = {t}, ratio = {ratio}")));
                    }
                    let vu = usage(ratio, n * alpha3 * horizon / 2.0);
                    cert.volume_usage = cert.volume_usage.max(vu);
                    if vu > 1.0 + 1e-9 {
                        return Err(fail("volume", format!("x = {x}, s = {s}, t = {t}")));
                    }
                    if d_base[x] > 0.0 && d_base[x].is_finite() {
                        let dr = d_t[x] / d_base[x];
                        let du = usage(dr, alpha3 * horizon / 2.0);
                        cert.distance_usage = cert.distance_usage.max(du);
                        if du > 1.0 + 1e-9 {
                            return Err(fail("distance", format!("x = {x}, t = {t}, ratio = {dr}")));
                        }
                    }
                }
            }
        }
    }
    Ok(cert)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeRateCheck {
    /// `max_i |∂_t V_i / V_i - σ R_i|`, with `σ = +1` for backward and `-1`
    /// for forward Ricci flows; `None` for non-Ricci families.
    pub residual: Option<f64>,
    /// `max_i |∂_t V_i| / V_i`.
    pub max_rate: f64,
    /// `n alpha3 / 2`.
    pub band: f64,
    pub within_band: bool,
}

/// Finite-difference volume-element rate at `t` compared with the exact
/// Ricci-flow rate `∂_t dV = ±R dV` and with the band `n alpha3 / 2`.
pub fn volume_element_rate_check(flow: &FlowSolution, t: f64) -> Result<VolumeRateCheck> {
    let (_, alpha3, ricci) = flow_bounds(flow)?;
    let n = flow.dim() as f64;
    let band = n * alpha3 / 2.0;
    if t <= flow.start() || t >= flow.end() {
        return Err(invalid("t", format!("{t} is not interior to [{}, {}]", flow.start(), flow.end())));
    }
    let sigma = match flow.direction() {
        Direction::Backward => 1.0,
        Direction::Forward => -1.0,
    };
    let (rate, curvature): (Vec<f64>, Vec<f64>) = match flow.data() {
        FlowData::Flat => (vec![0.0], vec![0.0]),
        FlowData::Sphere { .. } => {
            let scale = flow.sphere_scale(t)?;
            // dV = scale dV₀, R = 2K = 1/scale
            let rate = flow.sphere_scale_rate().unwrap() / scale;
            (vec![rate], vec![1.0 / scale])
        }
        FlowData::Conformal { grid, .. } | FlowData::Prescribed { grid, .. } => {
            let nodes = flow.nodes();
            let (tm, tp, tc) = if nodes.len() > 2 {
                let m = nodes.partition_point(|&x| x < t).clamp(1, nodes.len() - 2);
                let m = if (nodes[m] - t).abs() > (nodes[m - 1] - t).abs() && m > 1 { m - 1 } else { m };
                (nodes[m - 1], nodes[m + 1], nodes[m])
            } else {
                let d = 1e-4 * flow.horizon();
                (t - d, t + d, t)
            };
            let wm = flow.log_factor(tm)?;
            let wp = flow.log_factor(tp)?;
            let wc = flow.log_factor(tc)?;
            let rate: Vec<f64> = wm
                .iter()
                .zip(&wp)
                .zip(&wc)
                .map(|((a, b), c)| ((2.0 * b).exp() - (2.0 * a).exp()) / (tp - tm) / (2.0 * c).exp())
                .collect();
            let r: Vec<f64> = grid.gauss_curvature(&wc).iter().map(|k| 2.0 * k).collect();
            (rate, r)
        }
    };
    let max_rate = rate.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let residual = ricci.then(|| rate.iter().zip(&curvature).fold(0.0f64, |a, (r, c)| a.max((r - sigma * c).abs())));
    Ok(VolumeRateCheck { residual, max_rate, band, within_band: max_rate <= band * (1.0 + 1e-6) + 1e-12 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(amplitude: f64) -> GeometryModel {
        GeometryModel::conformal(LogProfile::CompactBump { amplitude, radius: 1.0, center: [0.0, 0.0] }, 2.0)
            .with_resolution(16.0)
    }

    #[test]
    fn flat_initial_data_stays_flat() {
        let f = evolve_forward(&GeometryModel::conformal(LogProfile::Zero, 2.0).with_resolution(8.0), 0.5).unwrap();
        for t in [0.0, 0.25, 0.5] {
            assert!(f.log_factor(t).unwrap().iter().all(|w| *w == 0.0));
        }
    }

    #[test]
    fn sphere_forward_shrinks_and_reverse_expands() {
        let f = evolve_forward(&GeometryModel::sphere(), 0.5).unwrap();
        assert!((f.sphere_scale(0.25).unwrap() - 0.75).abs() < 1e-15);
        let b = reverse(&f);
        assert_eq!(b.direction(), Direction::Backward);
        // (1 - T) + t = (1 - T)(1 + t / (1 - T))
        assert!((b.sphere_scale(0.1).unwrap() - 0.6).abs() < 1e-15);
        assert!(evolve_forward(&GeometryModel::sphere(), 1.0).is_err());
    }

    #[test]
    fn reverse_is_an_involution() {
        let f = evolve_forward(&bump(0.1), 0.05).unwrap();
        assert_eq!(reverse(&reverse(&f)), f);
        let flat = evolve_forward(&GeometryModel::flat(2, 1.0), 1.0).unwrap();
        assert_eq!(reverse(&flat).data(), flat.data());
    }

    #[test]
    fn bump_decays_under_the_flow() {
        let f = evolve_forward(&bump(0.1), 0.2).unwrap();
        let mut prev = f64::INFINITY;
        for t in f.nodes() {
            let sup = f.log_factor(t).unwrap().iter().fold(0.0f64, |a, w| a.max(w.abs()));
            assert!(sup <= prev + 1e-14);
            prev = sup;
        }
        assert!(f.max_step_residual() < 1e-8);
    }

    #[test]
    fn certificate_relations() {
        let flat = evolve_forward(&GeometryModel::flat(3, 1.0), 1.0).unwrap();
        let c = certify(&flat).unwrap();
        assert_eq!((c.k0, c.alpha3, c.distance_factor, c.volume_factor), (0.0, 0.0, 1.0, 1.0));

        let sphere = FlowSolution::from_model(&GeometryModel::sphere(), 0.0, 1.0).unwrap();
        let c = certify(&sphere).unwrap();
        assert_eq!(c.alpha3, 2.0 * c.k0);
        assert!((c.k0 - 0.5).abs() < 1e-15);

        let f = reverse(&evolve_forward(&bump(0.2), 0.1).unwrap());
        let c = certify(&f).unwrap();
        assert_eq!(c.alpha3, 2.0 * (2.0 - 1.0) * c.k0);
        assert!(c.metric_usage <= 1.0 && c.distance_usage <= 1.0 && c.volume_usage <= 1.0);
    }

    #[test]
    fn sphere_volume_rate_matches_curvature() {
        let sphere = FlowSolution::from_model(&GeometryModel::sphere(), 0.0, 2.0).unwrap();
        let chk = volume_element_rate_check(&sphere, 1.0).unwrap();
        assert!(chk.residual.unwrap() < 1e-15);
        assert!((chk.max_rate - 0.5).abs() < 1e-15);
        assert!(chk.within_band);
    }

    #[test]
    fn conformal_volume_rate_matches_curvature() {
        let f = reverse(&evolve_forward(&bump(0.2), 0.1).unwrap());
        let chk = volume_element_rate_check(&f, 0.05).unwrap();
        assert!(chk.residual.unwrap() < 1e-2 * chk.max_rate, "{chk:?}");
        assert!(chk.within_band);
    }
}
