use thiserror::Error;

/// Errors raised by the solvers and diagnostics of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("radius {radius} exceeds the model extent {extent}")]
    ExtentExceeded { radius: f64, extent: f64 },

    #[error("time {time} lies outside the flow lifespan [{start}, {end})")]
    OutsideLifespan { time: f64, start: f64, end: f64 },

    #[error("time {0} is not a node of the time grid")]
    NotATimeNode(f64),

    #[error("cell {0} lies on the boundary of the complex")]
    BoundarySource(usize),

    #[error("linear solver stalled after {iterations} iterations (relative residual {residual:e})")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("nonlinear flow step failed to converge at t = {time} (step {step:e})")]
    FlowNonConvergence { time: f64, step: f64 },

    #[error("curvature {curvature} exceeds the blow-up guard {guard} at t = {time}")]
    CurvatureBlowUp { time: f64, curvature: f64, guard: f64 },

    #[error("positivity guard violated at step {step}: {detail}")]
    PositivityGuard { step: usize, detail: String },

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("radius {radius} is below one cell width ({width})")]
    UnderResolved { radius: f64, width: f64 },

    #[error("test function support is clipped by the grid (|psi| = {value:e} on the boundary)")]
    SupportClipped { value: f64 },

    #[error("sequence member {member} violates the common curvature bound ({curvature} > {bound})")]
    CurvatureBound { member: usize, curvature: f64, bound: f64 },

    #[error("Gaussian bound fit exploded: {0}")]
    BoundViolation(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
