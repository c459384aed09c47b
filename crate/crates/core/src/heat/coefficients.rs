use crate::error::{invalid, Result};
use crate::geometry::DiscreteComplex;

/// Drift `a` and potential `b` of `u_t = Δu + a·∇u + bu`, sampled per cell
/// and time node.
///
/// Drift vectors are stored in an orthonormal frame of the metric at that
/// time: `(a_r, 0)` on radial complexes and `(a_x, a_y)` along
/// `e^{-w} ∂_x, e^{-w} ∂_y` on planar ones, so `|a| = hypot(a_x, a_y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientData {
    n_cells: usize,
    drift: Vec<[f64; 2]>,
    potential: Vec<f64>,
    /// Measured `sup |a|`.
    pub alpha1: f64,
    /// Measured `sup |b|`.
    pub alpha2: f64,
}

impl CoefficientData {
    pub fn new(complex: &DiscreteComplex, drift: Vec<[f64; 2]>, potential: Vec<f64>) -> Result<Self> {
        let expected = complex.len() * complex.times().len();
        if drift.len() != expected || potential.len() != expected {
            return Err(invalid("coefficients", format!("expected {expected} samples per field")));
        }
        if drift.iter().flatten().chain(&potential).any(|v| !v.is_finite()) {
            return Err(invalid("coefficients", "non-finite sample"));
        }
        let alpha1 = drift.iter().fold(0.0f64, |a, v| a.max(v[0].hypot(v[1])));
        let alpha2 = potential.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(Self { n_cells: complex.len(), drift, potential, alpha1, alpha2 })
    }

    pub fn zero(complex: &DiscreteComplex) -> Self {
        let n = complex.len() * complex.times().len();
        Self { n_cells: complex.len(), drift: vec![[0.0; 2]; n], potential: vec![0.0; n], alpha1: 0.0, alpha2: 0.0 }
    }

    pub fn constant_potential(complex: &DiscreteComplex, beta: f64) -> Self {
        let mut c = Self::zero(complex);
        c.potential.iter_mut().for_each(|b| *b = beta);
        c.alpha2 = beta.abs();
        c
    }

    pub fn drift_at(&self, m: usize) -> &[[f64; 2]] {
        &self.drift[m * self.n_cells..(m + 1) * self.n_cells]
    }

    pub fn potential_at(&self, m: usize) -> &[f64] {
        &self.potential[m * self.n_cells..(m + 1) * self.n_cells]
    }

    pub fn has_drift(&self) -> bool {
        self.alpha1 > 0.0
    }

    /// Whether the measured sups respect declared bounds `alpha1`, `alpha2`.
    pub fn within(&self, alpha1: f64, alpha2: f64) -> bool {
        self.alpha1 <= alpha1 + 1e-12 && self.alpha2 <= alpha2 + 1e-12
    }
}
