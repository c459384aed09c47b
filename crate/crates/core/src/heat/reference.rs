use nalgebra::DMatrix;

use super::BoundaryCondition;
use crate::error::{invalid, Result};
use crate::geometry::DiscreteComplex;

/// Largest complex accepted by [`dense_reference`].
pub const DENSE_LIMIT: usize = 400;

/// Brute-force propagator of `d/dt (V u) = -L u` for small complexes.
///
/// Each time step is split into `substeps` sub-intervals; on each, `p = V u`
/// is advanced by the matrix exponential of `-δt L V^{-1}` with volumes
/// interpolated linearly to the sub-interval midpoint. For static metrics
/// and for metrics scaling uniformly in time this is exact up to the
/// midpoint rule in the scale factor. Dirichlet cells are removed from the
/// system. Returns `u` at every time node from `s` to `t_end`.
pub fn dense_reference(
    complex: &DiscreteComplex,
    u0: &[f64],
    s: f64,
    t_end: f64,
    bc: BoundaryCondition,
    substeps: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = complex.len();
    if n > DENSE_LIMIT {
        return Err(invalid("complex", format!("{n} cells exceed the dense limit {DENSE_LIMIT}")));
    }
    if substeps == 0 {
        return Err(invalid("substeps", "must be positive"));
    }
    let m0 = complex.time_index(s)?;
    let m1 = complex.time_index(t_end)?;
    let clamp = bc == BoundaryCondition::Dirichlet && !complex.is_closed();
    let free: Vec<usize> = (0..n).filter(|&i| !(clamp && complex.cells()[i].boundary)).collect();
    let mut slot = vec![usize::MAX; n];
    for (a, &i) in free.iter().enumerate() {
        slot[i] = a;
    }
    let k = free.len();
    let mut l = DMatrix::<f64>::zeros(k, k);
    for (e, edge) in complex.edges().iter().enumerate() {
        let w = complex.conductances()[e];
        let (a, b) = (slot[edge.a], slot[edge.b]);
        if a != usize::MAX {
            l[(a, a)] += w;
        }
        if b != usize::MAX {
            l[(b, b)] += w;
        }
        if a != usize::MAX && b != usize::MAX {
            l[(a, b)] -= w;
            l[(b, a)] -= w;
        }
    }
    let v0 = complex.volumes_at(m0);
    let mut p = nalgebra::DVector::from_iterator(k, free.iter().map(|&i| v0[i] * u0[i]));
    let unpack = |p: &nalgebra::DVector<f64>, v: &[f64]| {
        let mut u = vec![0.0; n];
        for (a, &i) in free.iter().enumerate() {
            u[i] = p[a] / v[i];
        }
        u
    };
    let mut out = vec![unpack(&p, v0)];
    for m in m0..m1 {
        let dt = complex.times().step(m) / substeps as f64;
        let (va, vb) = (complex.volumes_at(m), complex.volumes_at(m + 1));
        for q in 0..substeps {
            let theta = (q as f64 + 0.5) / substeps as f64;
            let mut a = l.clone();
            for (col, &i) in free.iter().enumerate() {
                let v = (1.0 - theta) * va[i] + theta * vb[i];
                a.column_mut(col).scale_mut(-dt / v);
            }
            p = a.exp() * p;
        }
        out.push(unpack(&p, vb));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::{build_complex, GeometryModel};
    use crate::heat::{discrete_delta, solve_conjugate_forward};
    use crate::time::TimeGrid;

    fn error_at_end(model: &GeometryModel, steps: usize, t: f64) -> f64 {
        let c = Arc::new(build_complex(model, 1.0, &TimeGrid::uniform(0.0, t, steps).unwrap()).unwrap());
        let u0 = discrete_delta(&c, 0, 0.0).unwrap();
        let exact = dense_reference(&c, &u0, 0.0, t, BoundaryCondition::Neumann, 4).unwrap();
        let z = solve_conjugate_forward(c.clone(), 0, 0.0, BoundaryCondition::Neumann, t).unwrap();
        let last = z.times().len() - 1;
        z.at(last).iter().zip(&exact[last]).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
    }

    #[test]
    fn implicit_euler_converges_at_first_order() {
        for model in [GeometryModel::flat(2, 1.0), GeometryModel::sphere()] {
            let e1 = error_at_end(&model, 20, 0.1);
            let e2 = error_at_end(&model, 40, 0.1);
            assert!(e1 / e2 >= 1.8, "{:?}: {e1} {e2}", model.kind);
        }
    }

    #[test]
    fn dense_propagator_conserves_mass() {
        let c = build_complex(&GeometryModel::sphere(), 1.0, &TimeGrid::uniform(0.0, 0.1, 5).unwrap()).unwrap();
        let u0 = discrete_delta(&c, 0, 0.0).unwrap();
        let out = dense_reference(&c, &u0, 0.0, 0.1, BoundaryCondition::Neumann, 2).unwrap();
        for (m, u) in out.iter().enumerate() {
            let mass: f64 = u.iter().zip(c.volumes_at(m)).map(|(u, v)| u * v).sum();
            assert!((mass - 1.0).abs() < 1e-10, "{mass}");
        }
    }
}
