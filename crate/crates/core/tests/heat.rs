use std::sync::Arc;

use proptest::prelude::*;
use ricci_lab::geometry::{build_complex, GeometryModel, LogProfile};
use ricci_lab::heat::{
    discrete_delta, evolve_conjugate, mass_growth_profile, read_binary, solve_conjugate_forward,
    solve_linear_parabolic, BoundaryCondition, CoefficientData, Equation, FieldMeta, SolverOptions, BINARY_MAGIC,
};
use ricci_lab::{DiscreteComplex, TimeGrid};

fn complex(model: &GeometryModel, radius: f64, grid: &TimeGrid) -> Arc<DiscreteComplex> {
    Arc::new(build_complex(model, radius, grid).unwrap())
}

fn neumann_meta() -> FieldMeta {
    FieldMeta { equation: Equation::ConjugateHeat, bc: BoundaryCondition::Neumann, source: None }
}

/// Dirichlet heat kernel of the unit ball in R³ from its centre:
/// `Σ_k k sin(kπr) / (2r) e^{-k²π²t}`.
fn ball_kernel_3d(r: f64, t: f64) -> f64 {
    let pi = std::f64::consts::PI;
    (1..400)
        .map(|k| {
            let k = k as f64;
            let radial = if r < 1e-12 { k * pi } else { (k * pi * r).sin() / r };
            k * radial / 2.0 * (-k * k * pi * pi * t).exp()
        })
        .sum()
}

#[test]
fn dirichlet_ball_matches_eigenfunction_series() {
    let grid = TimeGrid::graded(0.0, 0.1, 1e-7, 2e-5, 1.01).unwrap();
    let c = complex(&GeometryModel::flat(3, 1.0).with_resolution(64.0), 1.0, &grid);
    let g = solve_conjugate_forward(c.clone(), c.basepoint(), 0.0, BoundaryCondition::Dirichlet, 0.1).unwrap();
    for t in [0.02, 0.05, 0.1] {
        let k = g.times().iter().position(|&s| s >= t - 1e-12).unwrap();
        let t = g.time(k);
        let peak = ball_kernel_3d(0.0, t);
        let err = c
            .cells()
            .iter()
            .zip(g.at(k))
            .map(|(cell, u)| (u - ball_kernel_3d(cell.position[0], t)).abs() / peak)
            .fold(0.0f64, f64::max);
        assert!(err < 0.02, "t = {t}: {err}");
    }
}

#[test]
fn flat_mass_within_balls_matches_gaussian_profile() {
    let grid = TimeGrid::graded(0.0, 0.25, 1e-7, 2e-5, 1.005).unwrap();
    let c = complex(&GeometryModel::flat(2, 4.0), 4.0, &grid);
    let z = solve_conjugate_forward(c.clone(), 0, 0.0, BoundaryCondition::Neumann, 0.25).unwrap();
    for t in [0.1, 0.25] {
        let t = *grid.nodes().iter().find(|s| **s >= t - 1e-12).unwrap();
        for (r, m) in mass_growth_profile(&z, &[0.5, 1.0, 1.5, 2.0], t).unwrap() {
            let exact = 1.0 - (-r * r / (4.0 * t)).exp();
            assert!((m - exact).abs() < 0.01, "R = {r}, t = {t}: {m} vs {exact}");
        }
    }
}

#[test]
fn mass_is_conserved_on_the_sphere_and_the_bump_flow() {
    let grid = TimeGrid::uniform(0.0, 0.5, 100).unwrap();
    let sphere = GeometryModel::sphere().with_resolution(16.0);
    let bump =
        GeometryModel::conformal(LogProfile::CompactBump { amplitude: 0.15, radius: 2.0, center: [0.0, 0.0] }, 3.5)
            .with_resolution(8.0);
    for (model, radius) in [(sphere, 2.0 * std::f64::consts::SQRT_2), (bump, 3.0)] {
        let c = complex(&model, radius, &grid);
        assert!(!c.is_static());
        let z = solve_conjugate_forward(c.clone(), c.basepoint(), 0.0, BoundaryCondition::Neumann, 0.5).unwrap();
        let worst = z.mass_trace().iter().fold(0.0f64, |a, m| a.max((m - 1.0).abs()));
        assert!(worst <= 1e-10, "{:?}: {worst}", model.kind);
    }
}

#[test]
fn static_kernels_are_symmetric() {
    let grid = TimeGrid::uniform(0.0, 0.2, 40).unwrap();
    let c = complex(&GeometryModel::flat_planar(1.5).with_resolution(8.0), 1.2, &grid);
    let interior: Vec<usize> = (0..c.len()).filter(|&i| !c.cells()[i].boundary).collect();
    let (a, b) = (interior[3], interior[interior.len() / 2 + 5]);
    let from_a = solve_conjugate_forward(c.clone(), a, 0.0, BoundaryCondition::Neumann, 0.2).unwrap();
    let from_b = solve_conjugate_forward(c.clone(), b, 0.0, BoundaryCondition::Neumann, 0.2).unwrap();
    for k in 1..from_a.n_times() {
        let (ab, ba) = (from_a.at(k)[b], from_b.at(k)[a]);
        assert!((ab - ba).abs() <= 1e-8 * ab.abs().max(ba.abs()), "step {k}: {ab} vs {ba}");
    }
}

#[test]
fn constant_potential_grows_exponentially() {
    let grid = TimeGrid::uniform(0.0, 1.0, 1000).unwrap();
    let c = complex(&GeometryModel::flat(2, 1.0).with_resolution(8.0), 1.0, &grid);
    for beta in [0.5, 1.0, -1.0] {
        let coeffs = CoefficientData::constant_potential(&c, beta);
        let f = solve_linear_parabolic(c.clone(), &coeffs, &vec![1.0; c.len()], None, BoundaryCondition::Neumann, 1.0)
            .unwrap();
        for (k, &t) in f.times().iter().enumerate() {
            let exact = (beta * t).exp();
            assert!(f.at(k).iter().all(|u| (u - exact).abs() <= 1e-3 * exact), "beta {beta}, t {t}");
        }
    }
}

#[test]
fn binary_dump_has_documented_layout() {
    let grid = TimeGrid::uniform(0.0, 0.1, 3).unwrap();
    let c = complex(&GeometryModel::flat(2, 1.0).with_resolution(4.0), 1.0, &grid);
    let z = solve_conjugate_forward(c.clone(), 0, 0.0, BoundaryCondition::Neumann, 0.1).unwrap();
    let bytes = z.to_binary();
    assert_eq!(&bytes[..8], BINARY_MAGIC);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
    assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize, c.len());
    assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 4);
    let back = read_binary(&bytes).unwrap();
    assert_eq!(back.values, z.values());
    assert!(read_binary(&bytes[..bytes.len() - 1]).is_err());
}

fn small_disk() -> Arc<DiscreteComplex> {
    complex(&GeometryModel::flat_planar(1.5).with_resolution(5.0), 1.0, &TimeGrid::uniform(0.0, 0.3, 15).unwrap())
}

fn sphere_cap() -> Arc<DiscreteComplex> {
    complex(&GeometryModel::sphere().with_resolution(6.0), 2.0, &TimeGrid::uniform(0.0, 0.3, 15).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn non_negative_data_stays_non_negative_and_keeps_its_mass(
        seed in proptest::collection::vec(0.0f64..1.0, 64),
        sphere in any::<bool>(),
    ) {
        let c = if sphere { sphere_cap() } else { small_disk() };
        let u0: Vec<f64> = (0..c.len()).map(|i| seed[i % seed.len()]).collect();
        let m0: f64 = u0.iter().zip(c.volumes_at(0)).map(|(u, v)| u * v).sum();
        let f = evolve_conjugate(c, u0, 0.0, 0.3, BoundaryCondition::Neumann, &SolverOptions::default(), neumann_meta()).unwrap();
        prop_assert!(f.min_value() >= -1e-14);
        for m in f.mass_trace() {
            prop_assert!((m - m0).abs() <= 1e-10 * m0.max(1.0));
        }
    }

    #[test]
    fn ordered_data_stay_ordered(
        lower in proptest::collection::vec(-1.0f64..1.0, 64),
        gap in proptest::collection::vec(0.0f64..1.0, 64),
    ) {
        let c = small_disk();
        let u0: Vec<f64> = (0..c.len()).map(|i| lower[i % 64]).collect();
        let v0: Vec<f64> = (0..c.len()).map(|i| lower[i % 64] + gap[i % 64]).collect();
        let opts = SolverOptions::default();
        let u = evolve_conjugate(c.clone(), u0, 0.0, 0.3, BoundaryCondition::Dirichlet, &opts, neumann_meta()).unwrap();
        let v = evolve_conjugate(c, v0, 0.0, 0.3, BoundaryCondition::Dirichlet, &opts, neumann_meta()).unwrap();
        prop_assert!(u.values().iter().zip(v.values()).all(|(a, b)| *a <= b + 1e-12));
    }

    #[test]
    fn non_positive_data_stay_non_positive_under_a_potential(
        data in proptest::collection::vec(-1.0f64..=0.0, 64),
        beta in -2.0f64..2.0,
    ) {
        let c = small_disk();
        let u0: Vec<f64> = (0..c.len()).map(|i| data[i % 64]).collect();
        let coeffs = CoefficientData::constant_potential(&c, beta);
        let f = solve_linear_parabolic(c, &coeffs, &u0, None, BoundaryCondition::Neumann, 0.3).unwrap();
        prop_assert!(f.max_value() <= 1e-8);
    }

    #[test]
    fn delta_sources_have_unit_mass(cell in 0usize..40) {
        let c = small_disk();
        let interior: Vec<usize> = (0..c.len()).filter(|&i| !c.cells()[i].boundary).collect();
        let y = interior[cell % interior.len()];
        let d = discrete_delta(&c, y, 0.0).unwrap();
        let m: f64 = d.iter().zip(c.volumes_at(0)).map(|(u, v)| u * v).sum();
        prop_assert!((m - 1.0).abs() < 1e-15);
    }
}
