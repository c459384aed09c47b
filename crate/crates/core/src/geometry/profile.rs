use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Analytic log-conformal factor `w(x)` on the plane; the metric is
/// `e^{2w} (dx² + dy²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum LogProfile {
    Zero,
    /// `A exp(-|x - c|² / width²)`.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// Smooth bump `A exp(1 - 1/(1 - s²))`, `s = |x - c| / radius`, zero for `s >= 1`.
    CompactBump {
        amplitude: f64,
        radius: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    Sum {
        terms: Vec<LogProfile>,
    },
    Scaled {
        factor: f64,
        profile: Box<LogProfile>,
    },
    /// `profile` multiplied by a smooth radial cutoff that equals 1 for
    /// `|x| <= radius` and 0 for `|x| >= radius + width`.
    Flattened {
        profile: Box<LogProfile>,
        radius: f64,
        width: f64,
    },
}

fn smooth_ramp(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// C^∞ transition from 1 (u <= 0) to 0 (u >= 1).
pub fn smooth_cutoff(u: f64) -> f64 {
    let a = smooth_ramp(1.0 - u);
    let b = smooth_ramp(u);
    if a + b == 0.0 {
        return if u < 0.5 { 1.0 } else { 0.0 };
    }
    a / (a + b)
}

impl LogProfile {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            LogProfile::Zero => 0.0,
            LogProfile::Gaussian { amplitude, width, center } => {
                let d2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                amplitude * (-d2 / (width * width)).exp()
            }
            LogProfile::CompactBump { amplitude, radius, center } => {
                let s2 = ((x - center[0]).powi(2) + (y - center[1]).powi(2)) / (radius * radius);
                if s2 >= 1.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / (1.0 - s2)).exp()
                }
            }
            LogProfile::Sum { terms } => terms.iter().map(|p| p.value(x, y)).sum(),
            LogProfile::Scaled { factor, profile } => factor * profile.value(x, y),
            LogProfile::Flattened { profile, radius, width } => {
                let rho = x.hypot(y);
                let chi = smooth_cutoff((rho - radius) / width);
                if chi == 0.0 {
                    0.0
                } else {
                    chi * profile.value(x, y)
                }
            }
        }
    }

    /// Radius of a disk about the origin outside which the profile vanishes,
    /// or `None` if the support is unbounded.
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            LogProfile::Zero => Some(0.0),
            LogProfile::Gaussian { amplitude, .. } => (*amplitude == 0.0).then_some(0.0),
            LogProfile::CompactBump { radius, center, .. } => Some(center[0].hypot(center[1]) + radius),
            LogProfile::Sum { terms } => {
                terms.iter().map(|t| t.support_radius()).try_fold(0.0f64, |acc, r| r.map(|r| acc.max(r)))
            }
            LogProfile::Scaled { factor, profile } => {
                if *factor == 0.0 {
                    Some(0.0)
                } else {
                    profile.support_radius()
                }
            }
            LogProfile::Flattened { profile, radius, width } => {
                let own = radius + width;
                Some(profile.support_radius().map_or(own, |r| r.min(own)))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.support_radius() == Some(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LogProfile::Zero => Ok(()),
            LogProfile::Gaussian { amplitude, width, .. } => {
                if !amplitude.is_finite() || !(*width > 0.0) {
                    return Err(invalid("profile", "gaussian needs finite amplitude and width > 0"));
                }
                Ok(())
            }
            LogProfile::CompactBump { amplitude, radius, .. } => {
                if !amplitude.is_finite() || !(*radius > 0.0) {
                    return Err(invalid("profile", "bump needs finite amplitude and radius > 0"));
                }
                Ok(())
            }
            LogProfile::Sum { terms } => terms.iter().try_for_each(|t| t.validate()),
            LogProfile::Scaled { factor, profile } => {
                if !factor.is_finite() {
                    return Err(invalid("profile", "non-finite scale factor"));
                }
                profile.validate()
            }
            LogProfile::Flattened { profile, radius, width } => {
                if !(*radius >= 0.0) || !(*width > 0.0) {
                    return Err(invalid("profile", "flattening needs radius >= 0 and width > 0"));
                }
                profile.validate()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_compactly_supported_and_peaks_at_amplitude() {
        let p = LogProfile::CompactBump { amplitude: 0.3, radius: 1.0, center: [0.5, 0.0] };
        assert!((p.value(0.5, 0.0) - 0.3).abs() < 1e-15);
        assert_eq!(p.value(1.5, 0.0), 0.0);
        assert_eq!(p.support_radius(), Some(1.5));
    }

    #[test]
    fn flattening_cuts_off_smoothly() {
        let g = LogProfile::Gaussian { amplitude: 1.0, width: 10.0, center: [0.0, 0.0] };
        let f = LogProfile::Flattened { profile: Box::new(g.clone()), radius: 2.0, width: 1.0 };
        assert_eq!(f.value(1.9, 0.0), g.value(1.9, 0.0));
        assert_eq!(f.value(3.0, 0.0), 0.0);
        let mid = f.value(2.5, 0.0) / g.value(2.5, 0.0);
        assert!((mid - 0.5).abs() < 1e-12);
        assert_eq!(f.support_radius(), Some(3.0));
    }

    #[test]
    fn gaussian_has_unbounded_support() {
        let g = LogProfile::Gaussian { amplitude: 0.1, width: 1.0, center: [0.0, 0.0] };
        assert_eq!(g.support_radius(), None);
        assert!(LogProfile::Scaled { factor: 0.0, profile: Box::new(g) }.is_zero());
    }
}
