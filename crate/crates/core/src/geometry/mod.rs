//! Model geometries and their finite-volume discretisations.
//!
//! A [`GeometryModel`] names one of four metric families. [`build_complex`]
//! samples it on a geodesic ball `B_k` around the basepoint over a time grid
//! and produces a [`DiscreteComplex`]: cell volumes, edge conductances,
//! scalar curvature and distances. Downstream solvers only ever see the
//! complex.

mod comparison;
mod complex;
pub mod planar;
mod profile;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use comparison::{comparison_ratio_bound, comparison_volume, RatioBound};
pub use complex::{
    ball_volume, ball_weights, build_complex, build_complex_on_flow, distance_from, distance_to_base, model_flow,
    BallVolume, Cell, DiscreteComplex, Edge, MetricSamples,
};
pub use planar::PlanarGrid;
pub use profile::{smooth_cutoff, LogProfile};

/// Squared radius of the round sphere at `t = 0`. The metric `h₀` has scalar
/// curvature 1, i.e. Gauss curvature 1/2.
pub const SPHERE_RADIUS_SQ: f64 = 2.0;

pub const DEFAULT_RESOLUTION: f64 = 32.0;

fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}

/// How a flat model is discretised: rotationally symmetric annuli, or a
/// square tensor grid (dimension 2 only).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[default]
    Radial,
    Planar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKind {
    /// Static Euclidean space `R^dim`.
    FlatEuclidean {
        dim: usize,
        #[serde(default)]
        layout: Layout,
    },
    /// Round sphere evolving by backward Ricci flow, `h(t) = (1 + t) h₀`.
    SphereBackwardFlow,
    /// Conformal metric `e^{2w}δ` on a square grid; `w₀` is evolved by Ricci
    /// flow. Built directly into a complex, the model yields the backward flow
    /// that arrives at `w₀` at the end of the time grid.
    ConformalPlaneFlow { initial: LogProfile },
    /// Conformal family `w(x, t) = profile(x) cos(omega t)`; not a Ricci flow,
    /// used where only metric-velocity bounds matter.
    PrescribedFamily { profile: LogProfile, omega: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryModel {
    pub kind: ModelKind,
    /// Cells per unit length.
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    /// Largest admissible ball radius (flat radial), grid half-width
    /// (planar), defaulting to the diameter for the sphere.
    #[serde(default)]
    pub extent: Option<f64>,
    /// Chart coordinates of the basepoint `x₀`; radial layouts require the origin.
    #[serde(default)]
    pub basepoint: [f64; 2],
}

impl GeometryModel {
    pub fn flat(dim: usize, radius: f64) -> Self {
        Self {
            kind: ModelKind::FlatEuclidean { dim, layout: Layout::Radial },
            resolution: DEFAULT_RESOLUTION,
            extent: Some(radius),
            basepoint: [0.0, 0.0],
        }
    }

    pub fn flat_planar(half_width: f64) -> Self {
        Self {
            kind: ModelKind::FlatEuclidean { dim: 2, layout: Layout::Planar },
            resolution: DEFAULT_RESOLUTION,
            extent: Some(half_width),
            basepoint: [0.0, 0.0],
        }
    }

    pub fn sphere() -> Self {
        Self {
            kind: ModelKind::SphereBackwardFlow,
            resolution: DEFAULT_RESOLUTION,
            extent: None,
            basepoint: [0.0, 0.0],
        }
    }

    pub fn conformal(initial: LogProfile, half_width: f64) -> Self {
        Self {
            kind: ModelKind::ConformalPlaneFlow { initial },
            resolution: DEFAULT_RESOLUTION,
            extent: Some(half_width),
            basepoint: [0.0, 0.0],
        }
    }

    pub fn prescribed(profile: LogProfile, omega: f64, half_width: f64) -> Self {
        Self {
            kind: ModelKind::PrescribedFamily { profile, omega },
            resolution: DEFAULT_RESOLUTION,
            extent: Some(half_width),
            basepoint: [0.0, 0.0],
        }
    }

    pub fn with_resolution(mut self, resolution: f64) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn with_basepoint(mut self, basepoint: [f64; 2]) -> Self {
        self.basepoint = basepoint;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ModelKind::FlatEuclidean { dim, .. } => *dim,
            _ => 2,
        }
    }

    pub fn layout(&self) -> Layout {
        match &self.kind {
            ModelKind::FlatEuclidean { layout, .. } => *layout,
            ModelKind::SphereBackwardFlow => Layout::Radial,
            _ => Layout::Planar,
        }
    }

    pub fn extent(&self) -> Result<f64> {
        match (&self.kind, self.extent) {
            (ModelKind::SphereBackwardFlow, None) => Ok(std::f64::consts::PI * SPHERE_RADIUS_SQ.sqrt()),
            (_, Some(e)) => Ok(e),
            (_, None) => Err(invalid("extent", "required for this model")),
        }
    }

    /// Log-conformal factor at time zero for planar models.
    pub fn initial_profile(&self) -> Option<&LogProfile> {
        match &self.kind {
            ModelKind::ConformalPlaneFlow { initial } => Some(initial),
            ModelKind::PrescribedFamily { profile, .. } => Some(profile),
            _ => None,
        }
    }

    pub fn planar_grid(&self) -> Result<PlanarGrid> {
        Ok(PlanarGrid::new(self.extent()?, self.resolution))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(invalid("resolution", format!("must be positive, got {}", self.resolution)));
        }
        let extent = self.extent()?;
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(invalid("extent", format!("must be positive, got {extent}")));
        }
        if self.layout() == Layout::Radial && self.basepoint != [0.0, 0.0] {
            return Err(invalid("basepoint", "radial layouts are centred at the origin"));
        }
        match &self.kind {
            ModelKind::FlatEuclidean { dim, layout } => {
                if *dim == 0 {
                    return Err(invalid("dim", "must be at least 1"));
                }
                if *layout == Layout::Planar && *dim != 2 {
                    return Err(invalid("layout", "planar layout requires dim = 2"));
                }
            }
            ModelKind::SphereBackwardFlow => {
                let diameter = std::f64::consts::PI * SPHERE_RADIUS_SQ.sqrt();
                if extent > diameter * (1.0 + 1e-12) {
                    return Err(invalid("extent", "cannot exceed the sphere diameter"));
                }
            }
            ModelKind::ConformalPlaneFlow { initial } => {
                initial.validate()?;
                match initial.support_radius() {
                    Some(r) if r < extent - 2.0 / self.resolution => {}
                    _ => return Err(invalid("initial", "w₀ must be compactly supported inside the grid")),
                }
            }
            ModelKind::PrescribedFamily { profile, omega } => {
                profile.validate()?;
                if !omega.is_finite() {
                    return Err(invalid("omega", "must be finite"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_round_trips_through_toml_shaped_json() {
        let m =
            GeometryModel::conformal(LogProfile::CompactBump { amplitude: 0.2, radius: 1.0, center: [0.0, 0.0] }, 3.0);
        let s = serde_json::to_string(&m).unwrap();
        let back: GeometryModel = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let s = r#"{"kind":{"type":"flat_euclidean","dim":2,"colour":1},"extent":1.0}"#;
        assert!(serde_json::from_str::<GeometryModel>(s).is_err());
    }

    #[test]
    fn conformal_support_must_fit_in_grid() {
        let m = GeometryModel::conformal(LogProfile::Gaussian { amplitude: 0.1, width: 1.0, center: [0.0, 0.0] }, 3.0);
        assert!(m.validate().is_err());
        let m =
            GeometryModel::conformal(LogProfile::CompactBump { amplitude: 0.1, radius: 1.0, center: [0.0, 0.0] }, 3.0);
        assert!(m.validate().is_ok());
    }
}
