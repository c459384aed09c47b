//! Finite-volume laboratory for linear parabolic equations on manifolds with
//! time-dependent metrics and for fundamental solutions of the conjugate heat
//! equation along Ricci flows.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] builds discrete Riemannian structures ([`DiscreteComplex`])
//!   for a handful of model geometries, plus ball volumes and the hyperbolic
//!   comparison volume.
//! * [`flow`] evolves metrics by Ricci flow, realises backward flows by time
//!   reversal and certifies curvature / metric-velocity bounds.
//! * [`heat`] is the geometry-agnostic implicit finite-volume solver.
//! * [`green`], [`maxprin`] and [`convseq`] turn the analytic statements into
//!   numerical checks: exhaustion by Green functions, the weighted maximum
//!   principle, Gaussian bounds and convergence along sequences of flows.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convseq;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod green;
pub mod heat;
pub mod linalg;
pub mod maxprin;
pub mod quadrature;
pub mod time;

pub use error::{Error, Result};
pub use geometry::{DiscreteComplex, GeometryModel};
pub use time::TimeGrid;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
