//! Square coordinate grids for conformally flat surfaces and the fast-marching
//! eikonal solver used for geodesic distances on them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::profile::LogProfile;

/// Nodes `(i, j)`, `0 <= i, j < side`, at coordinates `((i - half) h, (j - half) h)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarGrid {
    pub half: usize,
    pub spacing: f64,
}

impl PlanarGrid {
    pub fn new(half_width: f64, resolution: f64) -> Self {
        let half = (half_width * resolution).round().max(1.0) as usize;
        Self { half, spacing: 1.0 / resolution }
    }

    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half_width(&self) -> f64 {
        self.half as f64 * self.spacing
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.side() + i
    }

    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.side(), idx / self.side())
    }

    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.ij(idx);
        [(i as f64 - self.half as f64) * self.spacing, (j as f64 - self.half as f64) * self.spacing]
    }

    /// Node nearest to the point `p`.
    pub fn nearest(&self, p: [f64; 2]) -> Option<usize> {
        let to = |x: f64| (x / self.spacing).round() + self.half as f64;
        let (i, j) = (to(p[0]), to(p[1]));
        let max = (self.side() - 1) as f64;
        if !(0.0..=max).contains(&i) || !(0.0..=max).contains(&j) {
            return None;
        }
        Some(self.index(i as usize, j as usize))
    }

    pub fn on_edge(&self, idx: usize) -> bool {
        let (i, j) = self.ij(idx);
        let last = self.side() - 1;
        i == 0 || j == 0 || i == last || j == last
    }

    /// 4-neighbours inside the grid.
    pub fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.ij(idx);
        let side = self.side();
        let cand = [
            (i > 0).then(|| idx - 1),
            (i + 1 < side).then(|| idx + 1),
            (j > 0).then(|| idx - side),
            (j + 1 < side).then(|| idx + side),
        ];
        cand.into_iter().flatten()
    }

    pub fn sample(&self, profile: &LogProfile) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let [x, y] = self.coords(k);
                profile.value(x, y)
            })
            .collect()
    }

    /// Five-point Laplacian `Δ_h w`, with `w = 0` assumed outside the grid.
    pub fn laplacian(&self, w: &[f64]) -> Vec<f64> {
        let side = self.side();
        let inv_h2 = 1.0 / (self.spacing * self.spacing);
        let mut out = vec![0.0; w.len()];
        for j in 0..side {
            for i in 0..side {
                let k = j * side + i;
                let left = if i > 0 { w[k - 1] } else { 0.0 };
                let right = if i + 1 < side { w[k + 1] } else { 0.0 };
                let down = if j > 0 { w[k - side] } else { 0.0 };
                let up = if j + 1 < side { w[k + side] } else { 0.0 };
                out[k] = (left + right + down + up - 4.0 * w[k]) * inv_h2;
            }
        }
        out
    }

    /// Gauss curvature `K = -e^{-2w} Δ_h w` of `e^{2w}(dx² + dy²)`.
    pub fn gauss_curvature(&self, w: &[f64]) -> Vec<f64> {
        self.laplacian(w).iter().zip(w).map(|(l, w)| -(-2.0 * w).exp() * l).collect()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// First-order fast marching for `|∇d| = f` on the nodes of `grid` where
/// `active` holds, starting from `source`. Nodes within eight grid spacings of
/// the source are initialised by the straight segment with trapezoidal
/// slowness. Unreached nodes get `+inf`.
///
/// The scheme is monotone and positively homogeneous in `f`, so pointwise
/// slowness bounds `f₁ <= c f₀` carry over to `d₁ <= c d₀` exactly.
pub fn fast_marching(grid: &PlanarGrid, slowness: &[f64], active: &[bool], source: usize) -> Vec<f64> {
    let n = grid.len();
    let h = grid.spacing;
    let side = grid.side();
    let mut dist = vec![f64::INFINITY; n];
    let mut frozen = vec![false; n];
    let mut heap = BinaryHeap::new();
    let src = grid.coords(source);
    let (si, sj) = grid.ij(source);
    let reach = 8usize;
    for dj in -(reach as isize)..=reach as isize {
        for di in -(reach as isize)..=reach as isize {
            let (i, j) = (si as isize + di, sj as isize + dj);
            if i < 0 || j < 0 || i >= side as isize || j >= side as isize {
                continue;
            }
            let k = grid.index(i as usize, j as usize);
            if !active[k] {
                continue;
            }
            let p = grid.coords(k);
            let len = (p[0] - src[0]).hypot(p[1] - src[1]);
            if len <= reach as f64 * h + 1e-12 {
                dist[k] = len * 0.5 * (slowness[source] + slowness[k]);
                frozen[k] = true;
            }
        }
    }
    for k in 0..n {
        if frozen[k] {
            for nb in grid.neighbours(k) {
                if active[nb] && !frozen[nb] {
                    let d = local_update(grid, &dist, &frozen, slowness[nb] * h, nb);
                    if d < dist[nb] {
                        dist[nb] = d;
                        heap.push(Item(d, nb));
                    }
                }
            }
        }
    }
    while let Some(Item(d, k)) = heap.pop() {
        if frozen[k] || d > dist[k] {
            continue;
        }
        frozen[k] = true;
        for nb in grid.neighbours(k) {
            if active[nb] && !frozen[nb] {
                let cand = local_update(grid, &dist, &frozen, slowness[nb] * h, nb);
                if cand < dist[nb] {
                    dist[nb] = cand;
                    heap.push(Item(cand, nb));
                }
            }
        }
    }
    dist
}

fn local_update(grid: &PlanarGrid, dist: &[f64], frozen: &[bool], fh: f64, k: usize) -> f64 {
    let (i, j) = grid.ij(k);
    let side = grid.side();
    let val = |idx: usize| if frozen[idx] { dist[idx] } else { f64::INFINITY };
    let mut a = f64::INFINITY;
    if i > 0 {
        a = a.min(val(k - 1));
    }
    if i + 1 < side {
        a = a.min(val(k + 1));
    }
    let mut b = f64::INFINITY;
    if j > 0 {
        b = b.min(val(k - side));
    }
    if j + 1 < side {
        b = b.min(val(k + side));
    }
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if !lo.is_finite() {
        return f64::INFINITY;
    }
    if hi - lo >= fh {
        return lo + fh;
    }
    0.5 * (lo + hi + (2.0 * fh * fh - (hi - lo) * (hi - lo)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_fast_marching_is_close_to_euclidean() {
        let grid = PlanarGrid::new(2.0, 32.0);
        let src = grid.nearest([0.0, 0.0]).unwrap();
        let f = vec![1.0; grid.len()];
        let act = vec![true; grid.len()];
        let d = fast_marching(&grid, &f, &act, src);
        let mut worst: f64 = 0.0;
        for (k, dk) in d.iter().enumerate() {
            let [x, y] = grid.coords(k);
            let r = x.hypot(y);
            if r > 0.5 && r < 1.9 {
                worst = worst.max((dk - r).abs() / r);
            }
        }
        assert!(worst < 0.02, "relative error {worst}");
    }

    #[test]
    fn slowness_scaling_scales_distances() {
        let grid = PlanarGrid::new(1.0, 16.0);
        let src = grid.nearest([0.2, -0.1]).unwrap();
        let act = vec![true; grid.len()];
        let f0: Vec<f64> = (0..grid.len()).map(|k| 1.0 + 0.3 * grid.coords(k)[0].sin()).collect();
        let f1: Vec<f64> = f0.iter().map(|v| 1.7 * v).collect();
        let d0 = fast_marching(&grid, &f0, &act, src);
        let d1 = fast_marching(&grid, &f1, &act, src);
        for k in 0..grid.len() {
            assert!((d1[k] - 1.7 * d0[k]).abs() <= 1e-12 * (1.0 + d1[k]));
        }
    }

    #[test]
    fn laplacian_of_quadratic_is_constant() {
        let grid = PlanarGrid::new(1.0, 8.0);
        let w: Vec<f64> = (0..grid.len())
            .map(|k| {
                let [x, y] = grid.coords(k);
                x * x + y * y
            })
            .collect();
        let l = grid.laplacian(&w);
        for (k, lk) in l.iter().enumerate() {
            if !grid.on_edge(k) {
                assert!((lk - 4.0).abs() < 1e-10);
            }
        }
    }
}
