use std::sync::Arc;

use super::field::{Equation, FieldMeta, SpaceTimeField};
use super::{BoundaryCondition, CoefficientData, Reaction, SolverOptions, Stepper};
use crate::error::{invalid, Error, Result};
use crate::geometry::{ball_weights, DiscreteComplex};
use crate::linalg::{self, CsrMatrix};

/// `1 / V_y(s)` at cell `y`, zero elsewhere; unit mass by construction.
pub fn discrete_delta(complex: &DiscreteComplex, y: usize, s: f64) -> Result<Vec<f64>> {
    if y >= complex.len() {
        return Err(invalid("y", format!("cell {y} does not exist")));
    }
    if complex.cells()[y].boundary {
        return Err(Error::BoundarySource(y));
    }
    let m = complex.time_index(s)?;
    let mut u = vec![0.0; complex.len()];
    u[y] = 1.0 / complex.volumes_at(m)[y];
    Ok(u)
}

fn pattern(complex: &DiscreteComplex) -> CsrMatrix {
    let rows: Vec<Vec<usize>> =
        (0..complex.len()).map(|i| complex.neighbours(i).iter().map(|&(j, _)| j).collect()).collect();
    CsrMatrix::with_pattern(&rows)
}

/// `L u` with `(L u)_i = Σ_j w_ij (u_i - u_j)`.
fn stiffness_apply(complex: &DiscreteComplex, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for (e, edge) in complex.edges().iter().enumerate() {
        let flux = complex.conductances()[e] * (u[edge.a] - u[edge.b]);
        out[edge.a] += flux;
        out[edge.b] -= flux;
    }
    out
}

/// Adds `scale · L` to `a`.
fn add_stiffness(complex: &DiscreteComplex, a: &mut CsrMatrix, scale: f64) {
    for (e, edge) in complex.edges().iter().enumerate() {
        let w = scale * complex.conductances()[e];
        a.add(edge.a, edge.a, w);
        a.add(edge.b, edge.b, w);
        a.add(edge.a, edge.b, -w);
        a.add(edge.b, edge.a, -w);
    }
}

fn clamp_boundary(complex: &DiscreteComplex, a: &mut CsrMatrix, rhs: &mut [f64]) {
    for (i, c) in complex.cells().iter().enumerate() {
        if c.boundary {
            a.set_identity_row(i);
            a.clear_column(i);
            rhs[i] = 0.0;
        }
    }
}

fn dirichlet(complex: &DiscreteComplex, bc: BoundaryCondition) -> bool {
    bc == BoundaryCondition::Dirichlet && !complex.is_closed()
}

/// Fundamental solution of `∂_t u = Δu - Ru` from a δ at `(y, s)`, up to `t_end`.
pub fn solve_conjugate_forward(
    complex: Arc<DiscreteComplex>,
    y: usize,
    s: f64,
    bc: BoundaryCondition,
    t_end: f64,
) -> Result<SpaceTimeField> {
    solve_conjugate_forward_with(complex, y, s, bc, t_end, &SolverOptions::default())
}

pub fn solve_conjugate_forward_with(
    complex: Arc<DiscreteComplex>,
    y: usize,
    s: f64,
    bc: BoundaryCondition,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<SpaceTimeField> {
    let u0 = discrete_delta(&complex, y, s)?;
    let meta = FieldMeta { equation: Equation::ConjugateHeat, bc, source: Some((y, s)) };
    evolve_conjugate(complex, u0, s, t_end, bc, opts, meta)
}

/// Evolves arbitrary data `u0` at time `s` by the conjugate heat equation.
pub fn evolve_conjugate(
    complex: Arc<DiscreteComplex>,
    u0: Vec<f64>,
    s: f64,
    t_end: f64,
    bc: BoundaryCondition,
    opts: &SolverOptions,
    meta: FieldMeta,
) -> Result<SpaceTimeField> {
    let c = complex.as_ref();
    let n = c.len();
    if u0.len() != n {
        return Err(invalid("u0", format!("expected {n} values")));
    }
    let m0 = c.time_index(s)?;
    let m1 = c.time_index(t_end)?;
    if m1 <= m0 {
        return Err(invalid("t_end", format!("{t_end} must lie after the start time {s}")));
    }
    let clamp = dirichlet(c, bc);
    let weight_sum: Vec<f64> =
        (0..n).map(|i| c.neighbours(i).iter().map(|&(_, e)| c.conductances()[e]).sum()).collect();
    let mut a = pattern(c);
    let mut values = Vec::with_capacity(n * (m1 - m0 + 1));
    let mut u = u0;
    if clamp {
        for (i, cell) in c.cells().iter().enumerate() {
            if cell.boundary {
                u[i] = 0.0;
            }
        }
    }
    values.extend_from_slice(&u);
    for m in m0..m1 {
        let dt = c.times().step(m);
        let (vo, vn) = (c.volumes_at(m), c.volumes_at(m + 1));
        let (ro, rn) = (c.curvature_at(m), c.curvature_at(m + 1));
        let next = match opts.stepper {
            Stepper::Explicit => {
                let lu = stiffness_apply(c, &u);
                let mut next = vec![0.0; n];
                for i in 0..n {
                    let (keep, base) = match opts.reaction {
                        Reaction::VolumeRate => (vo[i] - dt * weight_sum[i], vo[i]),
                        Reaction::Curvature => {
                            (vn[i] * (1.0 - dt * ro[i]) - dt * weight_sum[i], vn[i] * (1.0 - dt * ro[i]))
                        }
                    };
                    if keep < 0.0 {
                        return Err(Error::PositivityGuard {
                            step: m,
                            detail: format!("explicit step {dt:e} too large for cell {i} (V - Δt Σw = {keep:e})"),
                        });
                    }
                    next[i] = (base * u[i] - dt * lu[i]) / vn[i];
                }
                if clamp {
                    for (i, cell) in c.cells().iter().enumerate() {
                        if cell.boundary {
                            next[i] = 0.0;
                        }
                    }
                }
                next
            }
            Stepper::ImplicitEuler | Stepper::CrankNicolson => {
                let theta = if opts.stepper == Stepper::ImplicitEuler { 1.0 } else { 0.5 };
                a.clear();
                add_stiffness(c, &mut a, theta * dt);
                let lu = if theta < 1.0 { stiffness_apply(c, &u) } else { vec![0.0; n] };
                let mut rhs = vec![0.0; n];
                for i in 0..n {
                    match opts.reaction {
                        Reaction::VolumeRate => {
                            a.add(i, i, vn[i]);
                            rhs[i] = vo[i] * u[i] - (1.0 - theta) * dt * lu[i];
                        }
                        Reaction::Curvature => {
                            let d = vn[i] * (1.0 + theta * dt * rn[i]);
                            if d <= 0.0 {
                                return Err(Error::PositivityGuard {
                                    step: m,
                                    detail: format!("1 + Δt R <= 0 at cell {i}"),
                                });
                            }
                            a.add(i, i, d);
                            rhs[i] = vn[i] * (1.0 - (1.0 - theta) * dt * ro[i]) * u[i] - (1.0 - theta) * dt * lu[i];
                        }
                    }
                }
                if clamp {
                    clamp_boundary(c, &mut a, &mut rhs);
                }
                let mut x = u.clone();
                linalg::solve(&a, &rhs, &mut x, true, &opts.linear)?;
                x
            }
        };
        u = next;
        values.extend_from_slice(&u);
    }
    Ok(SpaceTimeField::new(complex, m0, values, meta))
}

/// Solves `u_t = Δu + a·∇u + bu + f` from `u0` at the first time node up to
/// `t_end` by implicit Euler with upwinded drift.
pub fn solve_linear_parabolic(
    complex: Arc<DiscreteComplex>,
    coeffs: &CoefficientData,
    u0: &[f64],
    forcing: Option<&[f64]>,
    bc: BoundaryCondition,
    t_end: f64,
) -> Result<SpaceTimeField> {
    solve_linear_parabolic_with(complex, coeffs, u0, forcing, bc, t_end, &SolverOptions::default())
}

/// As [`solve_linear_parabolic`]. Only the implicit Euler stepper is
/// offered: it is the one for which the discrete maximum principle holds.
///
/// Each step solves
/// `V(u' - u) = Δt (-L u' + V (D u' + b u' + f))` at the new time level,
/// with `(D u)_i = Σ_j c_ij (u_j - u_i)` and `c_ij = max(a_{i→j}, 0) / ℓ_ij`.
/// The matrix is an M-matrix as long as `Δt · max b < 1`.
pub fn solve_linear_parabolic_with(
    complex: Arc<DiscreteComplex>,
    coeffs: &CoefficientData,
    u0: &[f64],
    forcing: Option<&[f64]>,
    bc: BoundaryCondition,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<SpaceTimeField> {
    if opts.stepper != Stepper::ImplicitEuler {
        return Err(invalid("stepper", "linear parabolic solves use implicit Euler"));
    }
    let c = complex.as_ref();
    let n = c.len();
    let nt = c.times().len();
    if u0.len() != n {
        return Err(invalid("u0", format!("expected {n} values")));
    }
    if let Some(f) = forcing {
        if f.len() != n * nt {
            return Err(invalid("forcing", format!("expected {} samples", n * nt)));
        }
    }
    let m1 = c.time_index(t_end)?;
    if m1 == 0 {
        return Err(invalid("t_end", "must lie after the first time node"));
    }
    let clamp = dirichlet(c, bc);
    let symmetric = !coeffs.has_drift();
    let mut a = pattern(c);
    let mut u = u0.to_vec();
    if clamp {
        for (i, cell) in c.cells().iter().enumerate() {
            if cell.boundary {
                u[i] = 0.0;
            }
        }
    }
    let mut values = Vec::with_capacity(n * (m1 + 1));
    values.extend_from_slice(&u);
    for m in 0..m1 {
        let dt = c.times().step(m);
        let vn = c.volumes_at(m + 1);
        let b = coeffs.potential_at(m + 1);
        let drift = coeffs.drift_at(m + 1);
        a.clear();
        add_stiffness(c, &mut a, dt);
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let growth = dt * b[i];
            if growth >= 1.0 {
                return Err(Error::PositivityGuard { step: m, detail: format!("Δt b = {growth} >= 1 at cell {i}") });
            }
            a.add(i, i, vn[i] * (1.0 - growth));
            let f = forcing.map_or(0.0, |f| f[(m + 1) * n + i]);
            rhs[i] = vn[i] * (u[i] + dt * f);
        }
        if !symmetric {
            for (e, edge) in c.edges().iter().enumerate() {
                let axis = edge.axis as usize;
                let along = 0.5 * (drift[edge.a][axis] + drift[edge.b][axis]);
                let len = c.edge_length(m + 1, e);
                let (ca, cb) = (along.max(0.0) / len, (-along).max(0.0) / len);
                let (ia, ib) = (edge.a, edge.b);
                if ca > 0.0 {
                    a.add(ia, ia, dt * vn[ia] * ca);
                    a.add(ia, ib, -dt * vn[ia] * ca);
                }
                if cb > 0.0 {
                    a.add(ib, ib, dt * vn[ib] * cb);
                    a.add(ib, ia, -dt * vn[ib] * cb);
                }
            }
        }
        if clamp {
            clamp_boundary(c, &mut a, &mut rhs);
        }
        let mut x = u.clone();
        linalg::solve(&a, &rhs, &mut x, symmetric, &opts.linear)?;
        u = x;
        values.extend_from_slice(&u);
    }
    let meta = FieldMeta { equation: Equation::LinearParabolic, bc, source: None };
    Ok(SpaceTimeField::new(complex, 0, values, meta))
}

/// `Σ_i u_i(t) V_i(t)`.
pub fn mass(field: &SpaceTimeField, t: f64) -> Result<f64> {
    let k = field.local_index(t)?;
    let v = field.complex().volumes_at(field.node(k));
    Ok(field.at(k).iter().zip(v).map(|(u, v)| u * v).sum())
}

/// Partial masses `m(R, t)` over balls about the basepoint, for each radius.
pub fn mass_growth_profile(field: &SpaceTimeField, radii: &[f64], t: f64) -> Result<Vec<(f64, f64)>> {
    let k = field.local_index(t)?;
    let c = field.complex();
    let m = field.node(k);
    let v = c.volumes_at(m);
    let u = field.at(k);
    radii
        .iter()
        .map(|&r| {
            let (w, _) = ball_weights(c, c.basepoint(), r, m)?;
            Ok((r, u.iter().zip(v).zip(&w).map(|((u, v), w)| u * v * w).sum()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_complex, GeometryModel};
    use crate::heat::read_binary;
    use crate::time::TimeGrid;

    fn flat_disk(steps: usize) -> Arc<DiscreteComplex> {
        Arc::new(
            build_complex(&GeometryModel::flat(2, 1.0), 1.0, &TimeGrid::uniform(0.0, 0.2, steps).unwrap()).unwrap(),
        )
    }

    #[test]
    fn delta_has_unit_mass_and_rejects_boundary() {
        let c = flat_disk(4);
        let d = discrete_delta(&c, 0, 0.0).unwrap();
        let m: f64 = d.iter().zip(c.volumes_at(0)).map(|(u, v)| u * v).sum();
        assert_eq!(m, 1.0);
        assert!(matches!(discrete_delta(&c, c.len() - 1, 0.0), Err(Error::BoundarySource(_))));
    }

    #[test]
    fn neumann_mass_is_conserved_and_dirichlet_leaks() {
        let c = flat_disk(40);
        let z = solve_conjugate_forward(c.clone(), 0, 0.0, BoundaryCondition::Neumann, 0.2).unwrap();
        let g = solve_conjugate_forward(c, 0, 0.0, BoundaryCondition::Dirichlet, 0.2).unwrap();
        assert!(z.mass_trace().iter().all(|m| (m - 1.0).abs() < 1e-12));
        let gm = g.mass_trace();
        assert!(gm.windows(2).skip(5).all(|w| w[1] < w[0]));
        assert!(z.min_value() >= 0.0 && g.min_value() >= 0.0);
        assert!(g.values().iter().zip(z.values()).all(|(g, z)| *g <= z + 1e-12));
    }

    #[test]
    fn explicit_stepper_guards_positivity() {
        let c = flat_disk(4);
        let opts = SolverOptions { stepper: Stepper::Explicit, ..Default::default() };
        let r = solve_conjugate_forward_with(c, 0, 0.0, BoundaryCondition::Neumann, 0.2, &opts);
        assert!(matches!(r, Err(Error::PositivityGuard { .. })));
    }

    #[test]
    fn crank_nicolson_conserves_mass() {
        let c = flat_disk(40);
        let opts = SolverOptions { stepper: Stepper::CrankNicolson, ..Default::default() };
        let z = solve_conjugate_forward_with(c, 0, 0.0, BoundaryCondition::Neumann, 0.2, &opts).unwrap();
        assert!(z.mass_trace().iter().all(|m| (m - 1.0).abs() < 1e-12));
    }

    #[test]
    fn constants_solve_the_homogeneous_equation() {
        let c = flat_disk(10);
        let u0 = vec![2.5; c.len()];
        let f =
            solve_linear_parabolic(c.clone(), &CoefficientData::zero(&c), &u0, None, BoundaryCondition::Neumann, 0.2)
                .unwrap();
        assert!(f.values().iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn binary_dump_round_trips() {
        let c = flat_disk(3);
        let z = solve_conjugate_forward(c, 0, 0.0, BoundaryCondition::Neumann, 0.2).unwrap();
        let back = read_binary(&z.to_binary()).unwrap();
        assert_eq!(back.cells, z.n_cells());
        assert_eq!(back.times, z.times());
        assert_eq!(back.values, z.values());
    }

    #[test]
    fn growth_profile_is_monotone_and_exhausts() {
        let c = flat_disk(20);
        let z = solve_conjugate_forward(c, 0, 0.0, BoundaryCondition::Neumann, 0.2).unwrap();
        let prof = mass_growth_profile(&z, &[0.1, 0.3, 0.6, 1.0, 1.5], 0.1).unwrap();
        assert!(prof.windows(2).all(|w| w[1].1 >= w[0].1));
        assert!((prof[4].1 - 1.0).abs() < 1e-12);
    }
}
