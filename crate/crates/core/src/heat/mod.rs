//! Implicit finite-volume solvers for the conjugate heat equation
//! `∂_t u = Δu - Ru` and for linear parabolic equations
//! `u_t = Δu + a·∇u + bu + f` on a [`DiscreteComplex`].
//!
//! The conjugate equation is stepped in conservative form
//! `d/dt (V_i u_i) = Σ_j w_ij (u_j - u_i)`, which is `∂_t u = Δu - Ru` with the
//! reaction rate read off the volume change (`∂_t dV = R dV` on a backward
//! Ricci flow). With Neumann conditions this makes `Σ_i u_i V_i` invariant to
//! round-off, and the implicit matrix `diag(V) + Δt L` is an M-matrix, so
//! nonnegative data stay nonnegative.

mod coefficients;
mod field;
mod reference;
mod solver;

use serde::{Deserialize, Serialize};

pub use coefficients::CoefficientData;
pub use field::{read_binary, BinaryField, Equation, FieldMeta, SpaceTimeField, BINARY_MAGIC, BINARY_VERSION};
pub use reference::{dense_reference, DENSE_LIMIT};
pub use solver::{
    discrete_delta, evolve_conjugate, mass, mass_growth_profile, solve_conjugate_forward, solve_conjugate_forward_with,
    solve_linear_parabolic, solve_linear_parabolic_with,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Boundary cells are clamped to zero.
    Dirichlet,
    /// No flux leaves the complex.
    Neumann,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    /// Unconditionally positivity preserving.
    #[default]
    ImplicitEuler,
    /// Second order in time; positivity is only guaranteed for small steps.
    CrankNicolson,
    /// Forward Euler, refused when `V_i - Δt Σ_j w_ij < 0` for some cell.
    Explicit,
}

/// How the `-Ru` term of the conjugate equation is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reaction {
    /// `R` is the discrete volume rate, giving exact mass conservation.
    #[default]
    VolumeRate,
    /// `R` is the sampled scalar curvature at the new time level.
    Curvature,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub stepper: Stepper,
    pub reaction: Reaction,
    pub linear: crate::linalg::LinearSolverOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            stepper: Stepper::ImplicitEuler,
            reaction: Reaction::VolumeRate,
            linear: crate::linalg::LinearSolverOptions { rel_tol: 1e-14, ..Default::default() },
        }
    }
}
