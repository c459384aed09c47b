use serde::{Deserialize, Serialize};

use super::complex::{ball_volume, DiscreteComplex};
use crate::error::{invalid, Error, Result};
use crate::quadrature;

/// `V_{k0}(r) = ∫_0^r (sinh(√k0 ρ) / √k0)^{n-1} dρ`.
///
/// This is the volume of a ball in the space form of curvature `-k0`
/// divided by the area of the unit sphere: the factor `ω_{n-1}` is left out,
/// which is harmless because only ratios of comparison volumes are used.
pub fn comparison_volume(k0: f64, n: usize, r: f64) -> Result<f64> {
    if !(k0 > 0.0) || !k0.is_finite() {
        return Err(invalid("k0", format!("must be positive, got {k0}")));
    }
    if n < 2 {
        return Err(invalid("n", "dimension must be at least 2"));
    }
    if !(r >= 0.0) || !r.is_finite() {
        return Err(invalid("r", format!("must be non-negative, got {r}")));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let s = k0.sqrt();
    let p = (n - 1) as i32;
    // sinh(x)/x is evaluated in a cancellation-free way for small x
    let integrand = move |rho: f64| {
        let x = s * rho;
        let ratio = if x < 1e-4 { 1.0 + x * x / 6.0 } else { x.sinh() / x };
        (rho * ratio).powi(p)
    };
    quadrature::adaptive(integrand, 0.0, r, 1e-12)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioBound {
    /// Measured `V_y(r) / V_y(√τ)`.
    pub lhs: f64,
    /// `V_{k0}(a √T) / V_{k0}(√T)` with `a = r / √τ + 1`.
    pub rhs: f64,
    pub a: f64,
}

/// Compares the measured ball-volume ratio at the first time node with the
/// space-form bound.
pub fn comparison_ratio_bound(
    complex: &DiscreteComplex,
    y: usize,
    r: f64,
    tau: f64,
    k0: f64,
    horizon: f64,
) -> Result<RatioBound> {
    if !(tau > 0.0) {
        return Err(invalid("tau", format!("must be positive, got {tau}")));
    }
    let small = tau.sqrt();
    if small < complex.cell_width() {
        return Err(Error::UnderResolved { radius: small, width: complex.cell_width() });
    }
    let t0 = complex.times().start();
    let denom = ball_volume(complex, y, small, t0)?.volume;
    let lhs = if r > 0.0 { ball_volume(complex, y, r, t0)?.volume / denom } else { 0.0 };
    let a = r / small + 1.0;
    let sqrt_t = horizon.sqrt();
    let rhs = comparison_volume(k0, complex.dim(), a * sqrt_t)? / comparison_volume(k0, complex.dim(), sqrt_t)?;
    Ok(RatioBound { lhs, rhs, a })
}
