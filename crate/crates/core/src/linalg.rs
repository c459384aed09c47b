//! Sparse linear algebra for the implicit steppers.
//!
//! Systems arising from the finite-volume operators are diagonally dominant
//! M-matrices. Radial complexes give tridiagonal systems and small planar
//! complexes narrow banded ones; both are factored directly without pivoting.
//! Larger planar systems use Jacobi-preconditioned CG (symmetric) or
//! BiCGSTAB (upwinded drift).

use crate::error::{Error, Result};

/// Compressed sparse row matrix with a fixed sparsity pattern.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the pattern from per-row column lists; the diagonal is always
    /// included. Values start at zero.
    pub fn with_pattern(rows: &[Vec<usize>]) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for (i, row) in rows.iter().enumerate() {
            let mut r: Vec<usize> = row.iter().copied().chain(std::iter::once(i)).collect();
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(&r);
            row_ptr.push(cols.len());
        }
        let values = vec![0.0; cols.len()];
        Self { n, row_ptr, cols, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        let pos = self.cols[range.clone()]
            .binary_search(&col)
            .unwrap_or_else(|_| panic!("entry ({row}, {col}) is outside the sparsity pattern"));
        range.start + pos
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let k = self.slot(row, col);
        self.values[k] += value;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.cols[range.clone()].binary_search(&col) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Replaces row `row` by the identity row.
    pub fn set_identity_row(&mut self, row: usize) {
        for k in self.row_ptr[row]..self.row_ptr[row + 1] {
            self.values[k] = if self.cols[k] == row { 1.0 } else { 0.0 };
        }
    }

    /// Zeroes the off-diagonal entries of column `col`.
    pub fn clear_column(&mut self, col: usize) {
        for row in 0..self.n {
            if row == col {
                continue;
            }
            let range = self.row_ptr[row]..self.row_ptr[row + 1];
            if let Ok(pos) = self.cols[range.clone()].binary_search(&col) {
                self.values[range.start + pos] = 0.0;
            }
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Half bandwidth `max |i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut b = 0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                b = b.max(i.abs_diff(self.cols[k]));
            }
        }
        b
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.values[k]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSolverOptions {
    /// Relative residual target `|b - Ax| <= rel_tol |b|` for iterative methods.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Systems with fewer unknowns than this (or tridiagonal systems of any
    /// size) are solved by banded LU.
    pub direct_limit: usize,
}

impl Default for LinearSolverOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-12, max_iter: 20_000, direct_limit: 2000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    BandedLu,
    ConjugateGradient,
    BiCgStab,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub method: Method,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `A x = b`, using `x` as the initial guess for iterative methods.
pub fn solve(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    symmetric: bool,
    opts: &LinearSolverOptions,
) -> Result<SolveStats> {
    let bw = a.bandwidth();
    if bw <= 1 || a.dim() < opts.direct_limit {
        banded_lu_solve(a, bw, b, x)?;
        return Ok(SolveStats { method: Method::BandedLu, iterations: 0, residual: 0.0 });
    }
    if symmetric {
        pcg(a, b, x, opts)
    } else {
        bicgstab(a, b, x, opts)
    }
}

/// Banded LU without pivoting. Valid for the diagonally dominant systems
/// produced here; a vanishing pivot is reported as a solver failure.
pub fn banded_lu_solve(a: &CsrMatrix, bw: usize, b: &[f64], x: &mut [f64]) -> Result<()> {
    let n = a.dim();
    let width = 2 * bw + 1;
    // band[i][bw + (j - i)] = A[i][j]
    let mut band = vec![0.0; n * width];
    for i in 0..n {
        for (j, v) in a.row(i) {
            band[i * width + (bw + j) - i] = v;
        }
    }
    let mut rhs = b.to_vec();
    for k in 0..n {
        let pivot = band[k * width + bw];
        if pivot.abs() < 1e-300 || !pivot.is_finite() {
            return Err(Error::LinearSolver { iterations: k, residual: f64::NAN });
        }
        let last = (k + bw).min(n - 1);
        for i in k + 1..=last {
            let lik = band[i * width + bw + k - i] / pivot;
            if lik == 0.0 {
                continue;
            }
            band[i * width + bw + k - i] = 0.0;
            for j in k + 1..=last.min(k + bw) {
                band[i * width + bw + j - i] -= lik * band[k * width + bw + j - k];
            }
            rhs[i] -= lik * rhs[k];
        }
    }
    for k in (0..n).rev() {
        let mut acc = rhs[k];
        let last = (k + bw).min(n - 1);
        for j in k + 1..=last {
            acc -= band[k * width + bw + j - k] * x[j];
        }
        x[k] = acc / band[k * width + bw];
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradients.
pub fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], opts: &LinearSolverOptions) -> Result<SolveStats> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { method: Method::ConjugateGradient, iterations: 0, residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let target = opts.rel_tol * bnorm;
    let mut res = norm(&r);
    for it in 0..opts.max_iter {
        if res <= target {
            return Ok(SolveStats { method: Method::ConjugateGradient, iterations: it, residual: res / bnorm });
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::LinearSolver { iterations: it, residual: res / bnorm });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = norm(&r);
    }
    // the recursive residual can drift; confirm with the true residual
    a.matvec(x, &mut ap);
    let true_res = b.iter().zip(&ap).map(|(b, y)| (b - y) * (b - y)).sum::<f64>().sqrt();
    if true_res <= target {
        return Ok(SolveStats {
            method: Method::ConjugateGradient,
            iterations: opts.max_iter,
            residual: true_res / bnorm,
        });
    }
    Err(Error::LinearSolver { iterations: opts.max_iter, residual: true_res / bnorm })
}

/// Right-preconditioned (Jacobi) BiCGSTAB for the non-symmetric drift systems.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], x: &mut [f64], opts: &LinearSolverOptions) -> Result<SolveStats> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { method: Method::BiCgStab, iterations: 0, residual: 0.0 });
    }
    let target = opts.rel_tol * bnorm;
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = norm(&r);
    for it in 0..opts.max_iter {
        if res <= target {
            return Ok(SolveStats { method: Method::BiCgStab, iterations: it, residual: res / bnorm });
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * inv_diag[i];
        }
        a.matvec(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(SolveStats { method: Method::BiCgStab, iterations: it + 1, residual: norm(&s) / bnorm });
        }
        for i in 0..n {
            z[i] = s[i] * inv_diag[i];
        }
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r);
        if omega == 0.0 {
            break;
        }
    }
    a.matvec(x, &mut t);
    let true_res = b.iter().zip(&t).map(|(b, y)| (b - y) * (b - y)).sum::<f64>().sqrt();
    if true_res <= target {
        return Ok(SolveStats { method: Method::BiCgStab, iterations: opts.max_iter, residual: true_res / bnorm });
    }
    Err(Error::LinearSolver { iterations: opts.max_iter, residual: true_res / bnorm })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 2-D five-point Laplacian plus a positive diagonal shift, optionally
    /// with an upwind drift in x.
    fn grid_system(m: usize, drift: f64) -> CsrMatrix {
        let n = m * m;
        let idx = |i: usize, j: usize| i * m + j;
        let mut rows = vec![Vec::new(); n];
        for i in 0..m {
            for j in 0..m {
                if i > 0 {
                    rows[idx(i, j)].push(idx(i - 1, j));
                }
                if i + 1 < m {
                    rows[idx(i, j)].push(idx(i + 1, j));
                }
                if j > 0 {
                    rows[idx(i, j)].push(idx(i, j - 1));
                }
                if j + 1 < m {
                    rows[idx(i, j)].push(idx(i, j + 1));
                }
            }
        }
        let mut a = CsrMatrix::with_pattern(&rows);
        for (r, cols) in rows.iter().enumerate() {
            a.add(r, r, 0.1);
            for &c in cols {
                a.add(r, r, 1.0);
                a.add(r, c, -1.0);
            }
            if drift > 0.0 && r % m + 1 < m {
                a.add(r, r, drift);
                a.add(r, r + 1, -drift);
            }
        }
        a
    }

    fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let mut y = vec![0.0; b.len()];
        a.matvec(x, &mut y);
        y.iter().zip(b).map(|(y, b)| (y - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn all_methods_agree_on_symmetric_system() {
        let a = grid_system(30, 0.0);
        let b: Vec<f64> = (0..900).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut x1 = vec![0.0; 900];
        let mut x2 = vec![0.0; 900];
        let mut x3 = vec![0.0; 900];
        banded_lu_solve(&a, a.bandwidth(), &b, &mut x1).unwrap();
        pcg(&a, &b, &mut x2, &LinearSolverOptions::default()).unwrap();
        bicgstab(&a, &b, &mut x3, &LinearSolverOptions::default()).unwrap();
        assert!(residual(&a, &x1, &b) < 1e-9);
        for i in 0..900 {
            assert!((x1[i] - x2[i]).abs() < 1e-8);
            assert!((x1[i] - x3[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn bicgstab_handles_upwind_drift() {
        let a = grid_system(40, 3.0);
        let b = vec![1.0; 1600];
        let mut x = vec![0.0; 1600];
        let stats = bicgstab(&a, &b, &mut x, &LinearSolverOptions::default()).unwrap();
        assert_eq!(stats.method, Method::BiCgStab);
        assert!(residual(&a, &x, &b) < 1e-8);
        let mut xd = vec![0.0; 1600];
        banded_lu_solve(&a, a.bandwidth(), &b, &mut xd).unwrap();
        assert!(x.iter().zip(&xd).all(|(p, q)| (p - q).abs() < 1e-8));
    }

    #[test]
    fn tridiagonal_is_solved_directly_at_any_size() {
        let n = 5000;
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut r = vec![];
                if i > 0 {
                    r.push(i - 1)
                }
                if i + 1 < n {
                    r.push(i + 1)
                }
                r
            })
            .collect();
        let mut a = CsrMatrix::with_pattern(&rows);
        for i in 0..n {
            a.add(i, i, 2.5);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
            }
        }
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let stats = solve(&a, &b, &mut x, true, &LinearSolverOptions::default()).unwrap();
        assert_eq!(stats.method, Method::BandedLu);
        assert!(residual(&a, &x, &b) < 1e-12);
    }
}
