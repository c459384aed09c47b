use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use ricci_lab::flow::certify;
use ricci_lab::geometry::{build_complex_on_flow, model_flow, GeometryModel};
use ricci_lab::heat::{solve_linear_parabolic, BoundaryCondition, CoefficientData};
use ricci_lab::maxprin::{
    build_cutoff, check_conclusion, cutoff_gradients, energy_inequality_check, growth_condition_value, ramp,
    random_instance, weight_residuals, CutoffData, InstanceBounds,
};
use ricci_lab::{DiscreteComplex, TimeGrid};

const BOUNDS: InstanceBounds = InstanceBounds { alpha1: 1.0, alpha2: 1.0 };

/// Flat disk of radius 3 on `[0, 3η]` with λ = 1, R = 1.
fn setup() -> &'static (Arc<DiscreteComplex>, CutoffData) {
    static CELL: OnceLock<(Arc<DiscreteComplex>, CutoffData)> = OnceLock::new();
    CELL.get_or_init(|| {
        let model = GeometryModel::flat_planar(3.5).with_resolution(8.0);
        let horizon = TimeGrid::uniform(0.0, 1.0, 400).unwrap();
        let flow = model_flow(&model, &horizon).unwrap();
        let cert = certify(&flow).unwrap();
        let grid = TimeGrid::uniform(0.0, 0.375, 150).unwrap();
        let complex = Arc::new(build_complex_on_flow(&flow, 3.0, &grid).unwrap());
        let cutoff = build_cutoff(&complex, &cert, 1.0, 1.0, 1.0, 1.0).unwrap();
        (complex, cutoff)
    })
}

#[test]
fn constants_follow_their_formulas() {
    let (_, c) = setup();
    assert_eq!(c.alpha3, 0.0);
    assert_eq!(c.lambda1, 1.0);
    assert_eq!(c.eta, 0.125);
    assert_eq!(c.c1, 2.0 * 1.0 + 4.0 * 1.0 + 0.0);
    for (r, p) in c.r0.iter().zip(&c.phi) {
        if *r <= 1.0 {
            assert_eq!(*p, 1.0);
        }
        if *r >= 2.0 {
            assert_eq!(*p, 0.0);
        }
    }
}

#[test]
fn weight_is_dominated_and_solves_the_eikonal_relation() {
    let (complex, c) = setup();
    for t in [0.0, 0.06, 0.12] {
        for (h, r) in c.weight(t).iter().zip(&c.r0) {
            assert!(*h <= -c.lambda1 * r * r * (1.0 - 1e-12));
        }
    }
    let (exact, damped) = weight_residuals(complex, c);
    assert!(exact < 0.05, "{exact}");
    assert!(damped < 0.05, "{damped}");
    let (g0, gall) = cutoff_gradients(complex, c);
    assert!(g0 <= 1.5 * 1.05 && gall <= 1.5 * 1.05, "{g0} {gall}");
}

#[test]
fn cutoff_rejects_bad_parameters() {
    let model = GeometryModel::flat_planar(3.5).with_resolution(8.0);
    let grid = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
    let flow = model_flow(&model, &grid).unwrap();
    let cert = certify(&flow).unwrap();
    let complex = build_complex_on_flow(&flow, 3.0, &grid).unwrap();
    assert!(build_cutoff(&complex, &cert, 0.0, 1.0, 1.0, 1.0).is_err());
    assert!(build_cutoff(&complex, &cert, 1.0, 0.5, 1.0, 1.0).is_err());
    assert!(build_cutoff(&complex, &cert, 1.0, 1.0, -1.0, 1.0).is_err());
}

#[test]
fn ramp_endpoints() {
    assert_eq!(ramp(-1.0), 1.0);
    assert_eq!(ramp(0.0), 1.0);
    assert_eq!(ramp(0.5), 0.5);
    assert_eq!(ramp(1.0), 0.0);
    assert_eq!(ramp(3.0), 0.0);
}

#[test]
fn instances_are_reproducible_and_bounded() {
    let (complex, _) = setup();
    let a = random_instance(7, complex, BOUNDS).unwrap();
    let b = random_instance(7, complex, BOUNDS).unwrap();
    assert_eq!(a.u0, b.u0);
    assert_eq!(a.forcing, b.forcing);
    assert!(a.coeffs.within(1.0, 1.0));
    assert!(a.u0.iter().all(|u| *u <= 0.0) && a.forcing.iter().all(|f| *f <= 0.0));
    assert_ne!(a.u0, random_instance(8, complex, BOUNDS).unwrap().u0);
    assert!(random_instance(1, complex, InstanceBounds { alpha1: f64::NAN, alpha2: 1.0 }).is_err());
}

#[test]
fn positive_data_breaks_the_conclusion_but_keeps_the_energy_inequality() {
    let (complex, cutoff) = setup();
    let inst = random_instance(3, complex, BOUNDS).unwrap();
    let bump: Vec<f64> = cutoff.r0.iter().map(|r| (1.0 - r * r).max(0.0)).collect();
    let end = complex.times().end();
    let f =
        solve_linear_parabolic(complex.clone(), &inst.coeffs, &bump, None, BoundaryCondition::Neumann, end).unwrap();
    assert!(!check_conclusion(&f).pass);
    let e = energy_inequality_check(&f, cutoff, true, 1e-10).unwrap();
    assert!(e.pass, "{e:?}");
    assert!(e.rhs > 0.0);
    assert!(growth_condition_value(&f, 1.0).unwrap().is_finite());
}

#[test]
fn static_heat_flow_from_zero_stays_zero() {
    let (complex, cutoff) = setup();
    let zero = vec![0.0; complex.len()];
    let coeffs = CoefficientData::zero(complex);
    let f = solve_linear_parabolic(complex.clone(), &coeffs, &zero, None, BoundaryCondition::Neumann, 0.375).unwrap();
    assert_eq!(f.max_value(), 0.0);
    let e = energy_inequality_check(&f, cutoff, false, 1e-10).unwrap();
    assert_eq!((e.lhs, e.rhs), (0.0, 0.0));
    assert_eq!(growth_condition_value(&f, 1.0).unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn subsolutions_stay_non_positive(seed in any::<u64>()) {
        let (complex, cutoff) = setup();
        let inst = random_instance(seed, complex, BOUNDS).unwrap();
        let end = complex.times().end();
        let f = solve_linear_parabolic(
            complex.clone(), &inst.coeffs, &inst.u0, Some(&inst.forcing), BoundaryCondition::Neumann, end,
        ).unwrap();
        let v = check_conclusion(&f);
        prop_assert!(v.pass, "max u = {}", v.max_u);
        let e = energy_inequality_check(&f, cutoff, false, 1e-10).unwrap();
        prop_assert!(e.pass, "{:?}", e);
    }
}
