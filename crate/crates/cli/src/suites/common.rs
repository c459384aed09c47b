use anyhow::Result;
use ricci_lab::flow::FlowCertificate;
use ricci_lab::geometry::{comparison_ratio_bound, comparison_volume, DiscreteComplex};
use ricci_lab::Error;

use crate::check::Checks;
use crate::output::{fmt, Csv};

pub const MASS: &str = "mass identity";
pub const ORACLE: &str = "oracle equivalence";
pub const EXHAUSTION: &str = "exhaustion limit";
pub const MAXIMUM: &str = "maximum principle";
pub const GAUSSIAN: &str = "Gaussian upper bound";
pub const VOLUME: &str = "volume comparison";
pub const SEQUENCE: &str = "sequence convergence";
pub const CERTIFICATION: &str = "flow certification";

/// Every statement in the order the verify matrix lists them.
pub const STATEMENTS: [&str; 8] = [MASS, ORACLE, EXHAUSTION, MAXIMUM, GAUSSIAN, VOLUME, SEQUENCE, CERTIFICATION];

/// Certificate arithmetic and sampled band usage.
pub fn certificate_checks(checks: &mut Checks, cert: &FlowCertificate, label: &str) {
    checks.statement(CERTIFICATION);
    if cert.ricci {
        let expected = 2.0 * (cert.dim as f64 - 1.0) * cert.k0;
        checks.equal(&format!("{label}alpha3_from_k0"), cert.alpha3, expected);
    }
    let usage = cert.metric_usage.max(cert.distance_usage).max(cert.volume_usage);
    checks.at_least(&format!("{label}band_samples"), cert.samples as f64, 1000.0);
    checks.holds(&format!("{label}band_violations_zero"), usage <= 1.0);
}

/// Ratios `V(r)/V(√τ)` against the space-form bound; returns the CSV and
/// the worst `lhs / rhs`. Scales `√τ` below one cell width are skipped.
pub fn volume_comparison(
    complex: &DiscreteComplex,
    k0: f64,
    horizon: f64,
    radii: &[f64],
    taus: &[f64],
) -> Result<(String, f64)> {
    // any positive k0 bounds a flat metric; the space form needs one
    let k0 = k0.max(f64::EPSILON);
    let mut csv = Csv::new(&["r", "tau", "measured_ratio", "bound"]);
    let mut worst = 0.0f64;
    let y = complex.basepoint();
    for &tau in taus {
        for &r in radii {
            let b = match comparison_ratio_bound(complex, y, r, tau, k0, horizon) {
                Err(Error::UnderResolved { .. }) => continue,
                other => other?,
            };
            worst = worst.max(b.lhs / b.rhs);
            csv.row(&[fmt(r), fmt(tau), fmt(b.lhs), fmt(b.rhs)]);
        }
    }
    Ok((csv.finish(), worst))
}

/// Largest deviation of the comparison volume from `cosh r - 1` (`n = 2`, `k0 = 1`).
pub fn closed_form_deviation() -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 1..=40 {
        let r = 0.1 * i as f64;
        worst = worst.max((comparison_volume(1.0, 2, r)? - (r.cosh() - 1.0)).abs());
    }
    Ok(worst)
}

pub fn max_abs_dev(values: impl IntoIterator<Item = f64>, target: f64) -> f64 {
    values.into_iter().fold(0.0f64, |a, v| a.max((v - target).abs()))
}
