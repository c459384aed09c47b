//! Weighted maximum principle for subsolutions of `u_t = Δu + a·∇u + bu`
//! on evolving metrics: the cutoff/weight apparatus, randomized subsolution
//! instances and the localized energy inequality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::flow::FlowCertificate;
use crate::geometry::{distance_to_base, DiscreteComplex, Layout};
use crate::heat::{CoefficientData, SpaceTimeField};

/// `η = min(1/(8 λ₁), ln(9/8)/α₃)`, or `min(1/(8 λ₁), T)` for static metrics.
pub fn eta(lambda1: f64, alpha3: f64, horizon: f64) -> f64 {
    let first = 1.0 / (8.0 * lambda1);
    if alpha3 == 0.0 {
        first.min(horizon)
    } else {
        first.min((9.0f64 / 8.0).ln() / alpha3)
    }
}

/// `C₁ = 2 α₂ + 4 α₁² + n α₃ / 2`.
pub fn energy_constant(alpha1: f64, alpha2: f64, alpha3: f64, n: usize) -> f64 {
    2.0 * alpha2 + 4.0 * alpha1 * alpha1 + n as f64 * alpha3 / 2.0
}

/// `φ(x)`: 1 for `x <= 0`, 0 for `x >= 1`, the cubic `1 - 3x² + 2x³` between.
/// Its slope lies in `[-3/2, 0]`.
pub fn ramp(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        1.0 - x * x * (3.0 - 2.0 * x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffData {
    pub lambda: f64,
    pub lambda1: f64,
    pub eta: f64,
    pub c1: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub dim: usize,
    pub horizon: f64,
    pub radius: f64,
    /// `r_i(0)`.
    pub r0: Vec<f64>,
    /// `φ(r_i(0) - R)`.
    pub phi: Vec<f64>,
}

impl CutoffData {
    /// `h_i(t) = -r_i(0)² / (4 (2η - t))`.
    pub fn weight(&self, t: f64) -> Vec<f64> {
        let d = 4.0 * (2.0 * self.eta - t);
        self.r0.iter().map(|r| -r * r / d).collect()
    }
}

/// Assembles the cutoff apparatus for a complex whose metric is certified
/// by `cert` and coefficients bounded by `alpha1`, `alpha2`.
///
/// Checks `h(x, t) <= -λ₁ r(x)²` for `0 <= t < η` on every cell.
pub fn build_cutoff(
    complex: &DiscreteComplex,
    cert: &FlowCertificate,
    lambda: f64,
    radius: f64,
    alpha1: f64,
    alpha2: f64,
) -> Result<CutoffData> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if !(radius >= 1.0) {
        return Err(invalid("radius", format!("must be at least 1, got {radius}")));
    }
    if !(alpha1 >= 0.0 && alpha2 >= 0.0) {
        return Err(invalid("alpha", "coefficient bounds must be non-negative"));
    }
    let lambda1 = lambda * (cert.alpha3 * cert.horizon).exp();
    let eta = eta(lambda1, cert.alpha3, cert.horizon);
    let c1 = energy_constant(alpha1, alpha2, cert.alpha3, cert.dim);
    let r0 = distance_to_base(complex, complex.times().start())?;
    let phi = r0.iter().map(|r| ramp(r - radius)).collect();
    let data = CutoffData {
        lambda,
        lambda1,
        eta,
        c1,
        alpha1,
        alpha2,
        alpha3: cert.alpha3,
        dim: cert.dim,
        horizon: cert.horizon,
        radius,
        r0,
        phi,
    };
    // the weight is largest at t = 0, where it equals -r²/(8η)
    let h0 = data.weight(0.0);
    if let Some(i) = (0..h0.len()).find(|&i| h0[i] > -lambda1 * data.r0[i] * data.r0[i] * (1.0 - 1e-12)) {
        return Err(invalid("lambda", format!("weight exceeds -λ₁r² at cell {i}")));
    }
    Ok(data)
}

/// `|∇f|²` per cell at time node `m`, from central differences along each
/// coordinate axis (one-sided next to the boundary).
pub fn cell_gradient_sq(complex: &DiscreteComplex, m: usize, f: &[f64]) -> Vec<f64> {
    (0..complex.len())
        .map(|i| {
            let mut total = 0.0;
            for axis in 0..2u8 {
                let mut lo: Option<(f64, f64)> = None;
                let mut hi: Option<(f64, f64)> = None;
                for &(j, e) in complex.neighbours(i) {
                    let edge = complex.edges()[e];
                    if edge.axis != axis {
                        continue;
                    }
                    let len = complex.edge_length(m, e);
                    // the lower-index endpoint of an edge lies on the negative side
                    if (edge.a == i) == (edge.a < edge.b) {
                        hi = Some((f[j], len));
                    } else {
                        lo = Some((f[j], len));
                    }
                }
                let g = match (lo, hi) {
                    (Some((fl, ll)), Some((fh, lh))) => (fh - fl) / (ll + lh),
                    (Some((fl, ll)), None) => (f[i] - fl) / ll,
                    (None, Some((fh, lh))) => (fh - f[i]) / lh,
                    (None, None) => 0.0,
                };
                total += g * g;
            }
            total
        })
        .collect()
}

/// Largest `|∇φ_R|` over cells, measured at time 0 and over all time nodes.
pub fn cutoff_gradients(complex: &DiscreteComplex, cutoff: &CutoffData) -> (f64, f64) {
    let grad = |m: usize| cell_gradient_sq(complex, m, &cutoff.phi).into_iter().fold(0.0f64, f64::max).sqrt();
    let at0 = grad(0);
    let all = (0..complex.times().len()).map(grad).fold(0.0f64, f64::max);
    (at0, all)
}

/// Relative residuals of the weight's Hamilton–Jacobi relations on `[0, η]`:
/// `max |h_t + |∇⁰h|²| / |h_t|` and `max (h_t + e^{-α₃η} |∇^t h|²) / |h_t|`,
/// over cells at least two cell widths away from the basepoint and the
/// boundary, where `r` is smooth.
pub fn weight_residuals(complex: &DiscreteComplex, cutoff: &CutoffData) -> (f64, f64) {
    let damp = (-cutoff.alpha3 * cutoff.eta).exp();
    let (mut exact, mut damped) = (0.0f64, f64::NEG_INFINITY);
    let start = complex.times().start();
    let margin = 2.0 * complex.cell_width();
    let keep: Vec<bool> = (0..complex.len())
        .map(|i| {
            cutoff.r0[i] >= margin
                && !complex.cells()[i].boundary
                && complex.neighbours(i).iter().all(|&(j, _)| !complex.cells()[j].boundary)
        })
        .collect();
    for (m, &t) in complex.times().nodes().iter().enumerate() {
        let t = t - start;
        if t > cutoff.eta * (1.0 + 1e-12) {
            break;
        }
        let h = cutoff.weight(t);
        let d = 2.0 * cutoff.eta - t;
        let g0 = cell_gradient_sq(complex, 0, &h);
        let gt = cell_gradient_sq(complex, m, &h);
        for i in (0..complex.len()).filter(|&i| keep[i]) {
            let ht = -cutoff.r0[i] * cutoff.r0[i] / (4.0 * d * d);
            exact = exact.max((ht + g0[i]).abs() / ht.abs());
            damped = damped.max((ht + damp * gt[i]) / ht.abs());
        }
    }
    (exact, damped)
}

/// Coefficient bounds for random instances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceBounds {
    pub alpha1: f64,
    pub alpha2: f64,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub seed: u64,
    pub coeffs: CoefficientData,
    pub u0: Vec<f64>,
    /// `f_i(t_m) <= 0`, row-major by time.
    pub forcing: Vec<f64>,
}

/// Random trigonometric field with `|f| <= 1` in chart coordinates and time.
struct Wave {
    terms: Vec<([f64; 3], f64, f64)>,
}

impl Wave {
    fn new(rng: &mut ChaCha8Rng, terms: usize) -> Self {
        let mut t: Vec<([f64; 3], f64, f64)> = (0..terms)
            .map(|_| {
                let freq = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-4.0..4.0)];
                (freq, rng.random_range(-1.0..1.0), rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        let norm: f64 = t.iter().map(|x| x.1.abs()).sum();
        t.iter_mut().for_each(|x| x.1 /= norm);
        Self { terms: t }
    }

    fn eval(&self, p: [f64; 2], t: f64) -> f64 {
        self.terms.iter().map(|(f, c, ph)| c * (f[0] * p[0] + f[1] * p[1] + f[2] * t + ph).cos()).sum()
    }
}

/// Smooth random drift and potential within `bounds`, non-positive initial
/// data and non-positive slack, all determined by `seed`.
pub fn random_instance(seed: u64, complex: &DiscreteComplex, bounds: InstanceBounds) -> Result<Instance> {
    if !(bounds.alpha1 >= 0.0 && bounds.alpha2 >= 0.0) || !bounds.alpha1.is_finite() || !bounds.alpha2.is_finite() {
        return Err(invalid("bounds", "must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ax, ay, b, g0, gf) = (
        Wave::new(&mut rng, 4),
        Wave::new(&mut rng, 4),
        Wave::new(&mut rng, 4),
        Wave::new(&mut rng, 3),
        Wave::new(&mut rng, 3),
    );
    let drift_scale = bounds.alpha1 * rng.random_range(0.5..=1.0);
    let potential_scale = bounds.alpha2 * rng.random_range(0.5..=1.0);
    let depth = rng.random_range(0.0..=1.0);
    let slack = rng.random_range(0.0..=1.0);
    let planar = complex.layout() == Layout::Planar;
    let n = complex.len();
    let nt = complex.times().len();
    let mut drift = Vec::with_capacity(n * nt);
    let mut potential = Vec::with_capacity(n * nt);
    let mut forcing = Vec::with_capacity(n * nt);
    for &t in complex.times().nodes() {
        for c in complex.cells() {
            let p = c.position;
            drift.push(if planar {
                let s = drift_scale / std::f64::consts::SQRT_2;
                [s * ax.eval(p, t), s * ay.eval(p, t)]
            } else {
                [drift_scale * ax.eval(p, t), 0.0]
            });
            potential.push(potential_scale * b.eval(p, t));
            forcing.push(-slack * 0.5 * (1.0 + gf.eval(p, t)));
        }
    }
    let t0 = complex.times().start();
    let u0 = complex.cells().iter().map(|c| -depth * 0.5 * (1.0 + g0.eval(c.position, t0))).collect();
    let coeffs = CoefficientData::new(complex, drift, potential)?;
    Ok(Instance { seed, coeffs, u0, forcing })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub max_u: f64,
    pub pass: bool,
}

/// `u <= 0` everywhere, to `1e-8`.
pub fn check_conclusion(field: &SpaceTimeField) -> Verdict {
    let max_u = field.max_value();
    Verdict { max_u, pass: max_u <= 1e-8 && field.is_finite() }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyCheck {
    /// `max_t` of the left-hand side over `[0, η]`.
    pub lhs: f64,
    pub rhs: f64,
    /// `max_t (LHS(t) - RHS)`.
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Localized energy inequality on `[0, η]`:
///
/// `e^{-C₁t} ∫ φ² e^h u₊² dV_t + (e^{-C₁η}/8) ∫_0^t ∫ φ² e^h |∇u₊|² dV dt
///    <= 32 e^{α₃T} ∫_0^η ∫_{B_{R+1} \ B_R} e^h u₊² dV dt`.
///
/// With `with_initial` the initial weighted energy `∫ φ² e^h u₊²(0) dV` is
/// added to the right-hand side, which covers data with `u(·, 0)₊ ≠ 0`.
/// Space integrals are cell sums, gradients are edge differences weighted
/// by conductances, and time integrals use the right-endpoint rule that
/// matches implicit stepping. The tolerance is `eps_rel` times the largest
/// `∫ u₊² dV`.
pub fn energy_inequality_check(
    field: &SpaceTimeField,
    cutoff: &CutoffData,
    with_initial: bool,
    eps_rel: f64,
) -> Result<EnergyCheck> {
    let complex = field.complex();
    let t0 = field.time(0);
    if field.time(field.n_times() - 1) - t0 < cutoff.eta * (1.0 - 1e-9) {
        return Err(invalid("field", format!("trajectory ends before η = {}", cutoff.eta)));
    }
    let phi2: Vec<f64> = cutoff.phi.iter().map(|p| p * p).collect();
    let annulus: Vec<bool> = cutoff.r0.iter().map(|&r| r >= cutoff.radius && r <= cutoff.radius + 1.0).collect();
    let pos = |k: usize| -> Vec<f64> { field.at(k).iter().map(|u| u.max(0.0)).collect() };
    let state = |k: usize, h: &[f64], up: &[f64]| -> (f64, f64, f64) {
        let v = complex.volumes_at(field.node(k));
        let mut weighted = 0.0;
        let mut ann = 0.0;
        let mut plain = 0.0;
        for i in 0..up.len() {
            let e = h[i].exp() * up[i] * up[i] * v[i];
            weighted += phi2[i] * e;
            plain += up[i] * up[i] * v[i];
            if annulus[i] {
                ann += e;
            }
        }
        (weighted, ann, plain)
    };
    let up0 = pos(0);
    let (i0, _, plain0) = state(0, &cutoff.weight(0.0), &up0);
    let mut scale = plain0;
    let mut grad_integral = 0.0;
    let mut annulus_integral = 0.0;
    let mut lhs_trace = vec![i0];
    for k in 1..field.n_times() {
        let t = field.time(k) - t0;
        if t > cutoff.eta * (1.0 + 1e-9) {
            break;
        }
        let dt = field.time(k) - field.time(k - 1);
        let h = cutoff.weight(t);
        let up = pos(k);
        let (weighted, ann, plain) = state(k, &h, &up);
        scale = scale.max(plain);
        let mut grad = 0.0;
        for (e, edge) in complex.edges().iter().enumerate() {
            let (a, b) = (edge.a, edge.b);
            let du = up[a] - up[b];
            let wgt = 0.5 * (phi2[a] * h[a].exp() + phi2[b] * h[b].exp());
            grad += complex.conductances()[e] * wgt * du * du;
        }
        grad_integral += dt * grad;
        annulus_integral += dt * ann;
        lhs_trace.push((-cutoff.c1 * t).exp() * weighted + (-cutoff.c1 * cutoff.eta).exp() / 8.0 * grad_integral);
    }
    let mut rhs = 32.0 * (cutoff.alpha3 * cutoff.horizon).exp() * annulus_integral;
    if with_initial {
        rhs += i0;
    }
    let lhs = lhs_trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let residual = lhs_trace.iter().map(|l| l - rhs).fold(f64::NEG_INFINITY, f64::max);
    let tolerance = eps_rel * scale;
    Ok(EnergyCheck { lhs, rhs, residual, tolerance, pass: residual <= tolerance })
}

/// `∫_0^T ∫ u₊² e^{-λ r_t²} dV_t dt` by the trapezoid rule in time.
pub fn growth_condition_value(field: &SpaceTimeField, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    let complex = field.complex();
    let slice = |k: usize| -> Result<f64> {
        let u = field.at(k);
        if u.iter().all(|v| *v <= 0.0) {
            return Ok(0.0);
        }
        let r = distance_to_base(complex, field.time(k))?;
        let v = complex.volumes_at(field.node(k));
        Ok((0..u.len()).map(|i| u[i].max(0.0).powi(2) * (-lambda * r[i] * r[i]).exp() * v[i]).sum())
    };
    let mut prev = slice(0)?;
    let mut total = 0.0;
    for k in 1..field.n_times() {
        let next = slice(k)?;
        total += 0.5 * (field.time(k) - field.time(k - 1)) * (prev + next);
        prev = next;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_formula() {
        let a3 = (9.0f64 / 8.0).ln();
        assert_eq!(eta(1.0, a3, 5.0), 0.125);
        assert_eq!(eta(0.01, a3, 5.0), 1.0);
        assert_eq!(eta(0.01, 0.0, 3.0), 3.0);
    }

    #[test]
    fn energy_constant_formula() {
        assert_eq!(energy_constant(0.0, 0.0, 0.0, 7), 0.0);
        assert_eq!(energy_constant(1.0, 1.0, 1.0, 2), 7.0);
    }

    #[test]
    fn ramp_is_monotone_with_bounded_slope() {
        let mut prev = ramp(-0.1);
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let v = ramp(x);
            assert!(v <= prev && (prev - v) <= 2.0 / 1000.0 + 1e-15);
            prev = v;
        }
        assert_eq!(ramp(0.0), 1.0);
        assert_eq!(ramp(1.0), 0.0);
    }
}
