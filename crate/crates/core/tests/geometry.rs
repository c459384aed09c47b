use std::f64::consts::PI;

use proptest::prelude::*;
use ricci_lab::flow::{certify, certify_with, evolve_forward, reverse, volume_element_rate_check, FlowSolution};
use ricci_lab::geometry::{
    ball_volume, build_complex, comparison_ratio_bound, comparison_volume, distance_to_base, model_flow, GeometryModel,
    LogProfile, SPHERE_RADIUS_SQ,
};
use ricci_lab::TimeGrid;

fn bump() -> LogProfile {
    LogProfile::CompactBump { amplitude: 0.15, radius: 2.0, center: [0.0, 0.0] }
}

#[test]
fn flat_ball_volumes_scale_with_dimension() {
    let grid = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
    for n in [2usize, 3] {
        let c = build_complex(&GeometryModel::flat(n, 3.0), 3.0, &grid).unwrap();
        let v1 = ball_volume(&c, 0, 1.0, 0.0).unwrap().volume;
        let v2 = ball_volume(&c, 0, 2.0, 0.0).unwrap().volume;
        assert!((v2 / v1 / 2f64.powi(n as i32) - 1.0).abs() < 0.01, "n = {n}");
        let whole = ball_volume(&c, 0, 3.0, 0.0).unwrap();
        assert!((whole.volume - c.total_volume(0)).abs() < 1e-12 * whole.volume);
    }
    let planar = build_complex(&GeometryModel::flat_planar(3.5), 3.0, &grid).unwrap();
    let y = planar.basepoint();
    let ratio = ball_volume(&planar, y, 2.0, 0.0).unwrap().volume / ball_volume(&planar, y, 1.0, 0.0).unwrap().volume;
    assert!((ratio - 4.0).abs() < 0.04, "{ratio}");
}

#[test]
fn sphere_cap_volumes_follow_the_closed_form() {
    let grid = TimeGrid::uniform(0.0, 0.5, 5).unwrap();
    let c = build_complex(&GeometryModel::sphere().with_resolution(64.0), PI * SPHERE_RADIUS_SQ.sqrt(), &grid).unwrap();
    for &t in &[0.0, 0.5] {
        let rho2 = SPHERE_RADIUS_SQ * (1.0 + t);
        let rho = rho2.sqrt();
        for r in [0.5, 1.0, 2.0] {
            let exact = 2.0 * PI * rho2 * (1.0 - (r / rho).cos());
            let got = ball_volume(&c, 0, r, t).unwrap().volume;
            assert!((got / exact - 1.0).abs() < 1e-3, "t {t} r {r}: {got} vs {exact}");
        }
        assert!((c.total_volume(grid.index_of(t).unwrap()) - 4.0 * PI * rho2).abs() < 1e-9 * rho2);
    }
}

#[test]
fn distances_on_the_bump_exceed_chart_distances() {
    let grid = TimeGrid::uniform(0.0, 0.2, 20).unwrap();
    let c = build_complex(&GeometryModel::conformal(bump(), 3.5).with_resolution(16.0), 3.0, &grid).unwrap();
    let d = distance_to_base(&c, 0.0).unwrap();
    for (i, cell) in c.cells().iter().enumerate() {
        let chart = cell.position[0].hypot(cell.position[1]);
        // w >= 0, so the metric dominates the Euclidean one
        assert!(d[i] >= chart * (1.0 - 0.03) - 1e-12, "cell {i}: {} < {chart}", d[i]);
    }
}

#[test]
fn comparison_volume_matches_closed_forms_in_two_and_three_dimensions() {
    for i in 1..=30 {
        let r = 0.1 * i as f64;
        let two = comparison_volume(1.0, 2, r).unwrap();
        assert!((two - (r.cosh() - 1.0)).abs() <= 1e-10 * two.max(1.0));
        let three = comparison_volume(1.0, 3, r).unwrap();
        let exact = (2.0 * r).sinh() / 4.0 - r / 2.0;
        assert!((three - exact).abs() <= 1e-10 * exact.max(1.0), "r {r}: {three} vs {exact}");
    }
    assert_eq!(comparison_volume(1.0, 2, 0.0).unwrap(), 0.0);
    assert!(comparison_volume(0.0, 2, 1.0).is_err());
    assert!(comparison_volume(1.0, 1, 1.0).is_err());
}

#[test]
fn ball_ratios_respect_the_comparison_bound() {
    let grid = TimeGrid::uniform(0.0, 0.5, 50).unwrap();
    let model = GeometryModel::conformal(bump(), 5.0).with_resolution(8.0);
    let flow = model_flow(&model, &grid).unwrap();
    let cert = certify(&flow).unwrap();
    let c = build_complex(&model, 4.0, &grid).unwrap();
    for tau in [0.05, 0.25, 0.5] {
        for r in [0.5, 1.0, 2.0, 3.0] {
            let b = comparison_ratio_bound(&c, c.basepoint(), r, tau, cert.k0, cert.horizon).unwrap();
            assert!(b.lhs <= 1.01 * b.rhs, "tau {tau} r {r}: {b:?}");
        }
    }
}

fn sphere_flow(horizon: f64) -> FlowSolution {
    model_flow(&GeometryModel::sphere(), &TimeGrid::uniform(0.0, horizon, 10).unwrap()).unwrap()
}

#[test]
fn sphere_backward_flow_is_linear_in_time() {
    let flow = sphere_flow(1.0);
    for t in [0.0, 0.3, 0.7] {
        assert!((flow.sphere_scale(t).unwrap() - (1.0 + t)).abs() < 1e-14);
    }
    let cert = certify(&flow).unwrap();
    assert!(cert.ricci);
    assert!((cert.k0 - 1.0 / SPHERE_RADIUS_SQ).abs() < 1e-14);
    assert_eq!(cert.alpha3, 2.0 * (cert.dim as f64 - 1.0) * cert.k0);
    let rate = volume_element_rate_check(&flow, 0.5).unwrap();
    assert!(rate.residual.unwrap() < 1e-12 && rate.within_band);
}

#[test]
fn conformal_flows_conserve_area_and_certify() {
    let model = GeometryModel::conformal(bump(), 4.0).with_resolution(8.0);
    let fwd = evolve_forward(&model, 0.5).unwrap();
    let back = reverse(&fwd);
    let cert = certify_with(&back, 1000, 7).unwrap();
    assert_eq!(cert.samples, 1000);
    assert_eq!(cert.alpha3, 2.0 * cert.k0);
    assert!(cert.metric_usage <= 1.0 && cert.distance_usage <= 1.0 && cert.volume_usage <= 1.0, "{cert:?}");
    let grid = fwd.planar_grid().unwrap();
    let h2 = grid.spacing * grid.spacing;
    let area = |t: f64| -> f64 { fwd.log_factor(t).unwrap().iter().map(|w| h2 * (2.0 * w).exp()).sum() };
    let a0 = area(0.0);
    // Total curvature is zero, so area only leaks through the box edge.
    let drift: Vec<f64> = [0.1, 0.25, 0.5].iter().map(|&t| (area(t) / a0 - 1.0).abs()).collect();
    assert!(drift[0] < 1e-6 && drift[2] < 1e-3, "{drift:?}");
    let rate = volume_element_rate_check(&back, 0.25).unwrap();
    assert!(rate.within_band, "{rate:?}");
}

#[test]
fn prescribed_family_uses_its_own_velocity_bound() {
    let model = GeometryModel::prescribed(bump(), 2.0, 3.0).with_resolution(8.0);
    let flow = model_flow(&model, &TimeGrid::uniform(0.0, 0.5, 10).unwrap()).unwrap();
    let cert = certify(&flow).unwrap();
    assert!(!cert.ricci);
    assert!((cert.alpha3 - 2.0 * 2.0 * 0.15).abs() < 1e-12, "{}", cert.alpha3);
    assert!(cert.metric_usage <= 1.0);
}

#[test]
fn text_dumps_are_self_describing() {
    let grid = TimeGrid::uniform(0.0, 0.1, 2).unwrap();
    let c = build_complex(&GeometryModel::flat(2, 1.0).with_resolution(4.0), 1.0, &grid).unwrap();
    let text = c.to_text();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# dim 2"));
    lines.next();
    assert_eq!(lines.next().unwrap(), "cell key x y boundary V0 V1 V2");
    assert_eq!(text.lines().count(), 3 + c.len());
    let snap = sphere_flow(1.0).snapshot_text(&[0.0, 0.5]).unwrap();
    assert!(snap.starts_with("# time node x y w K\n"));
    let cert = certify(&sphere_flow(1.0)).unwrap().to_text();
    assert!(cert.contains("alpha3 = ") && cert.contains("k0 = "));
}

proptest! {
    #[test]
    fn comparison_volume_scales_with_curvature(r in 0.05f64..3.0, k in 0.05f64..4.0, n in 2usize..5) {
        // V_k(r) = k^{-n/2} V_1(√k r)
        let lhs = comparison_volume(k, n, r).unwrap();
        let rhs = k.powf(-(n as f64) / 2.0) * comparison_volume(1.0, n, k.sqrt() * r).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs);
    }

    #[test]
    fn comparison_volume_tends_to_the_flat_limit(r in 0.1f64..3.0) {
        let v = comparison_volume(1e-10, 2, r).unwrap();
        prop_assert!((v - r * r / 2.0).abs() <= 1e-8 * r * r);
    }

    #[test]
    fn flat_ball_volume_is_monotone(r in 0.1f64..2.9, dr in 0.01f64..1.0) {
        let grid = TimeGrid::uniform(0.0, 1.0, 1).unwrap();
        let c = build_complex(&GeometryModel::flat(2, 4.0).with_resolution(8.0), 4.0, &grid).unwrap();
        let a = ball_volume(&c, 0, r, 0.0).unwrap().volume;
        let b = ball_volume(&c, 0, r + dr, 0.0).unwrap().volume;
        prop_assert!(b >= a);
    }
}
