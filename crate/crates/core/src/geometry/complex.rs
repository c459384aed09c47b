use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::planar::{fast_marching, PlanarGrid};
use super::{GeometryModel, Layout, ModelKind, SPHERE_RADIUS_SQ};
use crate::error::{invalid, Error, Result};
use crate::flow::{evolve_forward, reverse, FlowData, FlowSolution};
use crate::time::TimeGrid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Chart coordinates: `(r, 0)` for flat radial cells, `(θ, 0)` on the
    /// sphere, `(x, y)` on planar grids.
    pub position: [f64; 2],
    /// Index that identifies the same chart location across nested balls.
    pub key: usize,
    pub boundary: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// 0 for radial or x-direction edges, 1 for y-direction edges.
    pub axis: u8,
}

/// How metric quantities beyond volumes are recovered at each time node.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricSamples {
    Flat,
    /// Sphere scale factor per time node.
    SphereScale(Vec<f64>),
    /// Conformal factor `e^{w} = sqrt(V) / h`, read back from the volumes.
    Conformal,
}

#[derive(Clone, Debug, PartialEq)]
enum Structure {
    /// Vertex-centred annuli with coordinate faces `[a_i, b_i]`, node
    /// spacing `spacing` (length for flat, angle for the sphere).
    Radial {
        spacing: f64,
        faces: Vec<(f64, f64)>,
        sphere: bool,
    },
    Planar {
        grid: PlanarGrid,
    },
}

/// Finite-volume skeleton of a geodesic ball `B_k` over a time grid.
///
/// The discrete Laplace–Beltrami operator is
/// `(Δu)_i = (1/V_i) Σ_j w_ij (u_j - u_i)` with symmetric conductances; all
/// supported models have time-independent conductances (flat metrics are
/// static, and in two dimensions the flux coefficients of conformal metrics
/// do not depend on the conformal factor).
#[derive(Clone, Debug)]
pub struct DiscreteComplex {
    dim: usize,
    layout: Layout,
    structure: Structure,
    cells: Vec<Cell>,
    edges: Vec<Edge>,
    conductances: Vec<f64>,
    adjacency: Vec<Vec<(usize, usize)>>,
    times: TimeGrid,
    volumes: Vec<f64>,
    curvature: Vec<f64>,
    metric: MetricSamples,
    base_distance: Vec<f64>,
    basepoint: usize,
    ball_radius: f64,
    closed: bool,
    cell_width: f64,
}

impl DiscreteComplex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn conductances(&self) -> &[f64] {
        &self.conductances
    }

    /// `(neighbour, edge index)` pairs of cell `i`.
    pub fn neighbours(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn times(&self) -> &TimeGrid {
        &self.times
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times.index_of(t)
    }

    pub fn volumes_at(&self, m: usize) -> &[f64] {
        let n = self.cells.len();
        &self.volumes[m * n..(m + 1) * n]
    }

    pub fn total_volume(&self, m: usize) -> f64 {
        self.volumes_at(m).iter().sum()
    }

    /// Scalar curvature `R_i(t_m)`.
    pub fn curvature_at(&self, m: usize) -> &[f64] {
        let n = self.cells.len();
        &self.curvature[m * n..(m + 1) * n]
    }

    pub fn metric(&self) -> &MetricSamples {
        &self.metric
    }

    /// Distances from the basepoint at the first time node.
    pub fn base_distances(&self) -> &[f64] {
        &self.base_distance
    }

    pub fn basepoint(&self) -> usize {
        self.basepoint
    }

    pub fn ball_radius(&self) -> f64 {
        self.ball_radius
    }

    /// True for a closed manifold (the whole sphere): no boundary cells.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Grid spacing in length units of the first time node.
    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn is_static(&self) -> bool {
        let n = self.cells.len();
        let v0 = &self.volumes[..n];
        (1..self.times.len()).all(|m| self.volumes_at(m) == v0)
    }

    pub fn planar_grid(&self) -> Option<&PlanarGrid> {
        match &self.structure {
            Structure::Planar { grid } => Some(grid),
            _ => None,
        }
    }

    /// Cell carrying `key`, if present.
    pub fn cell_by_key(&self, key: usize) -> Option<usize> {
        self.cells.binary_search_by_key(&key, |c| c.key).ok()
    }

    /// Euclidean norm of the chart position.
    pub fn chart_radius(&self, i: usize) -> f64 {
        let p = self.cells[i].position;
        p[0].hypot(p[1])
    }

    /// Length of edge `e` in the metric at time node `m`.
    pub fn edge_length(&self, m: usize, e: usize) -> f64 {
        let Edge { a, b, .. } = self.edges[e];
        match (&self.structure, &self.metric) {
            (Structure::Radial { spacing, .. }, MetricSamples::SphereScale(s)) => {
                (SPHERE_RADIUS_SQ * s[m]).sqrt() * spacing
            }
            (Structure::Radial { spacing, .. }, _) => *spacing,
            (Structure::Planar { grid }, _) => {
                let v = self.volumes_at(m);
                grid.spacing * ((v[a] * v[b]).sqrt() / (grid.spacing * grid.spacing)).sqrt()
            }
        }
    }

    /// `(Δu)_i = (1/V_i(t_m)) Σ_j w_ij (u_j - u_i)`.
    pub fn laplacian(&self, m: usize, u: &[f64]) -> Vec<f64> {
        let v = self.volumes_at(m);
        let mut out = vec![0.0; self.cells.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            let flux = self.conductances[e] * (u[edge.b] - u[edge.a]);
            out[edge.a] += flux;
            out[edge.b] -= flux;
        }
        for (o, vi) in out.iter_mut().zip(v) {
            *o /= vi;
        }
        out
    }

    /// Self-describing columnar text dump: one row per cell with its key,
    /// position, boundary flag and volume at every time node.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ =
            writeln!(s, "# dim {} layout {:?} cells {} times {}", self.dim, self.layout, self.len(), self.times.len());
        let _ = write!(s, "# times");
        for t in self.times.nodes() {
            let _ = write!(s, " {t:.16e}");
        }
        let _ = writeln!(s);
        let _ = write!(s, "cell key x y boundary");
        for m in 0..self.times.len() {
            let _ = write!(s, " V{m}");
        }
        let _ = writeln!(s);
        for (i, c) in self.cells.iter().enumerate() {
            let _ = write!(s, "{i} {} {:.16e} {:.16e} {}", c.key, c.position[0], c.position[1], c.boundary as u8);
            for m in 0..self.times.len() {
                let _ = write!(s, " {:.16e}", self.volumes_at(m)[i]);
            }
            let _ = writeln!(s);
        }
        s
    }
}

/// Builds the complex of the ball `B_k` of `model` sampled on `time_grid`.
///
/// Flat and sphere models use their closed forms; the sphere is the backward
/// flow `(1 + t) h₀`. A conformal model is evolved forward by Ricci flow over
/// the span of the grid and reversed, so the complex carries the backward
/// flow that ends at `w₀`. A prescribed family is sampled as given.
pub fn build_complex(model: &GeometryModel, ball_radius: f64, time_grid: &TimeGrid) -> Result<DiscreteComplex> {
    build_complex_on_flow(&model_flow(model, time_grid)?, ball_radius, time_grid)
}

/// The metric family [`build_complex`] samples for `model` over `time_grid`.
/// Build it once when several balls share one flow.
pub fn model_flow(model: &GeometryModel, time_grid: &TimeGrid) -> Result<FlowSolution> {
    model.validate()?;
    let (t0, span) = (time_grid.start(), time_grid.end() - time_grid.start());
    match &model.kind {
        ModelKind::ConformalPlaneFlow { initial } if !initial.is_zero() => {
            Ok(reverse(&evolve_forward(model, span)?).shifted_to(t0))
        }
        _ => FlowSolution::from_model(model, t0, span),
    }
}

/// Builds the complex of `B_k` for an explicit metric family.
pub fn build_complex_on_flow(flow: &FlowSolution, ball_radius: f64, time_grid: &TimeGrid) -> Result<DiscreteComplex> {
    let model = flow.model();
    let extent = model.extent()?;
    if !(ball_radius > 0.0) {
        return Err(invalid("ball_radius", format!("must be positive, got {ball_radius}")));
    }
    if ball_radius > extent * (1.0 + 1e-12) {
        return Err(Error::ExtentExceeded { radius: ball_radius, extent });
    }
    let tol = 1e-9 * (1.0 + flow.end().abs());
    if time_grid.start() < flow.start() - tol || time_grid.end() > flow.end() + tol {
        return Err(Error::OutsideLifespan { time: time_grid.end(), start: flow.start(), end: flow.end() });
    }
    match (&model.kind, flow.data()) {
        (ModelKind::FlatEuclidean { dim, layout: Layout::Radial }, _) => {
            flat_radial(*dim, model.resolution, ball_radius, time_grid)
        }
        (ModelKind::SphereBackwardFlow, FlowData::Sphere { .. }) => {
            sphere_radial(flow, model.resolution, ball_radius, time_grid)
        }
        (ModelKind::FlatEuclidean { layout: Layout::Planar, .. }, _) => {
            let grid = model.planar_grid()?;
            let zeros = vec![0.0; grid.len()];
            planar(model, &grid, ball_radius, time_grid, |_| Ok(zeros.clone()))
        }
        (_, FlowData::Conformal { grid, .. }) | (_, FlowData::Prescribed { grid, .. }) => {
            let grid = *grid;
            planar(model, &grid, ball_radius, time_grid, |t| flow.log_factor(t))
        }
        _ => Err(invalid("flow", "metric data does not match the model")),
    }
}

fn unit_sphere_area(n: usize) -> f64 {
    // ω_{n-1} = 2 π^{n/2} / Γ(n/2)
    let half = n as f64 / 2.0;
    let gamma = if n.is_multiple_of(2) {
        (1..n / 2).map(|k| k as f64).product::<f64>()
    } else {
        // Γ(k + 1/2) = (2k)! √π / (4^k k!)
        let k = (n - 1) / 2;
        (0..k).map(|j| j as f64 + 0.5).product::<f64>() * PI.sqrt()
    };
    2.0 * PI.powf(half) / gamma
}

fn radial_skeleton(nodes: usize, closed: bool) -> (Vec<Cell>, Vec<Edge>) {
    let cells =
        (0..nodes).map(|i| Cell { position: [0.0, 0.0], key: i, boundary: !closed && i + 1 == nodes }).collect();
    let edges = (0..nodes - 1).map(|i| Edge { a: i, b: i + 1, axis: 0 }).collect();
    (cells, edges)
}

fn adjacency(n: usize, edges: &[Edge]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); n];
    for (e, edge) in edges.iter().enumerate() {
        adj[edge.a].push((edge.b, e));
        adj[edge.b].push((edge.a, e));
    }
    adj
}

fn flat_radial(dim: usize, resolution: f64, k: f64, times: &TimeGrid) -> Result<DiscreteComplex> {
    let h = 1.0 / resolution;
    let last = (k * resolution).round() as usize;
    if last < 2 {
        return Err(invalid("resolution", format!("ball of radius {k} spans fewer than two cells")));
    }
    let k_eff = last as f64 * h;
    let omega = unit_sphere_area(dim);
    let n = dim as i32;
    let faces: Vec<(f64, f64)> =
        (0..=last).map(|i| (((i as f64 - 0.5) * h).max(0.0), ((i as f64 + 0.5) * h).min(k_eff))).collect();
    let vol: Vec<f64> = faces.iter().map(|(a, b)| omega / dim as f64 * (b.powi(n) - a.powi(n))).collect();
    let (mut cells, edges) = radial_skeleton(last + 1, false);
    for (i, c) in cells.iter_mut().enumerate() {
        c.position = [i as f64 * h, 0.0];
    }
    let conductances = (0..last).map(|i| omega * ((i as f64 + 0.5) * h).powi(n - 1) / h).collect();
    let volumes = vol.iter().copied().cycle().take(vol.len() * times.len()).collect();
    let ncell = cells.len();
    Ok(DiscreteComplex {
        dim,
        layout: Layout::Radial,
        structure: Structure::Radial { spacing: h, faces, sphere: false },
        adjacency: adjacency(ncell, &edges),
        base_distance: (0..ncell).map(|i| i as f64 * h).collect(),
        cells,
        edges,
        conductances,
        times: times.clone(),
        volumes,
        curvature: vec![0.0; ncell * times.len()],
        metric: MetricSamples::Flat,
        basepoint: 0,
        ball_radius: k_eff,
        closed: false,
        cell_width: h,
    })
}

fn sphere_radial(flow: &FlowSolution, resolution: f64, k: f64, times: &TimeGrid) -> Result<DiscreteComplex> {
    let full = (PI * SPHERE_RADIUS_SQ.sqrt() * resolution).round() as usize;
    let dtheta = PI / full as f64;
    let scales: Vec<f64> = times.nodes().iter().map(|&t| flow.sphere_scale(t)).collect::<Result<_>>()?;
    let rho0 = (SPHERE_RADIUS_SQ * scales[0]).sqrt();
    let last = ((k / rho0) / dtheta).round().min(full as f64) as usize;
    if last < 2 {
        return Err(invalid("resolution", format!("ball of radius {k} spans fewer than two cells")));
    }
    let closed = last == full;
    let theta_max = last as f64 * dtheta;
    let faces: Vec<(f64, f64)> = (0..=last)
        .map(|i| (((i as f64 - 0.5) * dtheta).max(0.0), ((i as f64 + 0.5) * dtheta).min(theta_max)))
        .collect();
    let (mut cells, edges) = radial_skeleton(last + 1, closed);
    for (i, c) in cells.iter_mut().enumerate() {
        c.position = [i as f64 * dtheta, 0.0];
    }
    let conductances = (0..last).map(|i| 2.0 * PI * ((i as f64 + 0.5) * dtheta).sin() / dtheta).collect();
    let ncell = cells.len();
    let mut volumes = Vec::with_capacity(ncell * times.len());
    let mut curvature = Vec::with_capacity(ncell * times.len());
    for &s in &scales {
        let rho2 = SPHERE_RADIUS_SQ * s;
        volumes.extend(faces.iter().map(|(a, b)| 2.0 * PI * rho2 * (a.cos() - b.cos())));
        // R = 2K = 2 / ρ²
        curvature.extend(std::iter::repeat_n(2.0 / rho2, ncell));
    }
    Ok(DiscreteComplex {
        dim: 2,
        layout: Layout::Radial,
        structure: Structure::Radial { spacing: dtheta, faces, sphere: true },
        adjacency: adjacency(ncell, &edges),
        base_distance: (0..ncell).map(|i| rho0 * i as f64 * dtheta).collect(),
        cells,
        edges,
        conductances,
        times: times.clone(),
        volumes,
        curvature,
        metric: MetricSamples::SphereScale(scales),
        basepoint: 0,
        ball_radius: rho0 * theta_max,
        closed,
        cell_width: rho0 * dtheta,
    })
}

fn planar_distances(grid: &PlanarGrid, w: &[f64], active: &[bool], source: usize) -> Vec<f64> {
    if w.iter().all(|v| *v == 0.0) {
        let c = grid.coords(source);
        return (0..grid.len())
            .map(|k| {
                if active[k] {
                    let p = grid.coords(k);
                    (p[0] - c[0]).hypot(p[1] - c[1])
                } else {
                    f64::INFINITY
                }
            })
            .collect();
    }
    let f: Vec<f64> = w.iter().map(|v| v.exp()).collect();
    fast_marching(grid, &f, active, source)
}

fn planar<F>(
    model: &GeometryModel,
    grid: &PlanarGrid,
    k: f64,
    times: &TimeGrid,
    log_factor: F,
) -> Result<DiscreteComplex>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let h = grid.spacing;
    let source = grid.nearest(model.basepoint).ok_or_else(|| invalid("basepoint", "outside the grid"))?;
    let w0 = log_factor(times.start())?;
    let all = vec![true; grid.len()];
    let d0 = planar_distances(grid, &w0, &all, source);
    let inside: Vec<bool> = d0.iter().map(|d| *d <= k * (1.0 + 1e-12)).collect();
    let keys: Vec<usize> = (0..grid.len()).filter(|&g| inside[g]).collect();
    if keys.iter().any(|&g| grid.on_edge(g)) {
        return Err(Error::ExtentExceeded { radius: k, extent: grid.half_width() });
    }
    if keys.len() < 5 {
        return Err(invalid("resolution", format!("ball of radius {k} contains fewer than five cells")));
    }
    let mut local = vec![usize::MAX; grid.len()];
    for (i, &g) in keys.iter().enumerate() {
        local[g] = i;
    }
    let cells: Vec<Cell> = keys
        .iter()
        .map(|&g| Cell { position: grid.coords(g), key: g, boundary: grid.neighbours(g).any(|nb| !inside[nb]) })
        .collect();
    let side = grid.side();
    let mut edges = Vec::new();
    for (i, &g) in keys.iter().enumerate() {
        if g % side + 1 < side && inside[g + 1] {
            edges.push(Edge { a: i, b: local[g + 1], axis: 0 });
        }
        if g + side < grid.len() && inside[g + side] {
            edges.push(Edge { a: i, b: local[g + side], axis: 1 });
        }
    }
    let ncell = cells.len();
    let mut volumes = Vec::with_capacity(ncell * times.len());
    let mut curvature = Vec::with_capacity(ncell * times.len());
    for (m, &t) in times.nodes().iter().enumerate() {
        let w = if m == 0 { w0.clone() } else { log_factor(t)? };
        let kk = grid.gauss_curvature(&w);
        volumes.extend(keys.iter().map(|&g| (2.0 * w[g]).exp() * h * h));
        curvature.extend(keys.iter().map(|&g| 2.0 * kk[g]));
    }
    let flat = w0.iter().all(|v| *v == 0.0) && volumes.iter().all(|v| *v == h * h);
    Ok(DiscreteComplex {
        dim: 2,
        layout: Layout::Planar,
        structure: Structure::Planar { grid: *grid },
        adjacency: adjacency(ncell, &edges),
        conductances: vec![1.0; edges.len()],
        edges,
        base_distance: keys.iter().map(|&g| d0[g]).collect(),
        basepoint: local[source],
        cells,
        times: times.clone(),
        volumes,
        curvature,
        metric: if flat { MetricSamples::Flat } else { MetricSamples::Conformal },
        ball_radius: k,
        closed: false,
        cell_width: h,
    })
}

/// Distances from the basepoint at time `t`: exact arclength on radial
/// complexes, fast marching with the time-`t` conformal factor on planar ones.
pub fn distance_to_base(complex: &DiscreteComplex, t: f64) -> Result<Vec<f64>> {
    let m = complex.time_index(t)?;
    distance_from(complex, complex.basepoint, m)
}

/// Distances from cell `center` at time node `m`.
pub fn distance_from(complex: &DiscreteComplex, center: usize, m: usize) -> Result<Vec<f64>> {
    if center >= complex.len() {
        return Err(invalid("center", format!("cell {center} does not exist")));
    }
    match (&complex.structure, &complex.metric) {
        (Structure::Radial { .. }, metric) => {
            if center != complex.basepoint {
                return Err(invalid("center", "radial complexes only measure distances from the centre"));
            }
            Ok(match metric {
                MetricSamples::SphereScale(s) => {
                    let f = (s[m] / s[0]).sqrt();
                    complex.base_distance.iter().map(|d| d * f).collect()
                }
                _ => complex.base_distance.clone(),
            })
        }
        (Structure::Planar { grid }, metric) => {
            if center == complex.basepoint && (matches!(metric, MetricSamples::Flat) || m == 0) {
                return Ok(complex.base_distance.clone());
            }
            let h2 = grid.spacing * grid.spacing;
            let mut w = vec![0.0; grid.len()];
            let mut active = vec![false; grid.len()];
            for (i, c) in complex.cells.iter().enumerate() {
                w[c.key] = 0.5 * (complex.volumes_at(m)[i] / h2).ln();
                active[c.key] = true;
            }
            if matches!(metric, MetricSamples::Flat) {
                w.iter_mut().for_each(|v| *v = 0.0);
            }
            let d = planar_distances(grid, &w, &active, complex.cells[center].key);
            Ok(complex.cells.iter().map(|c| d[c.key]).collect())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallVolume {
    pub volume: f64,
    /// The ball reaches the boundary of the complex, so the volume is a
    /// lower bound for the untruncated one.
    pub truncated: bool,
}

/// Fraction of each cell inside the ball of `radius` about `center` at time node `m`.
///
/// Radial cells are annuli, and the fraction is the exact volume fraction
/// of the annulus below `radius`. Planar cells count fully when their
/// distance is half a cell width below `radius`, with a linear ramp across
/// one cell width.
pub fn ball_weights(complex: &DiscreteComplex, center: usize, radius: f64, m: usize) -> Result<(Vec<f64>, bool)> {
    match &complex.structure {
        Structure::Radial { faces, sphere, .. } => {
            if center != complex.basepoint {
                return Err(invalid("center", "radial complexes only support balls about the centre"));
            }
            let n = complex.dim as i32;
            let (coord, outer) = match &complex.metric {
                MetricSamples::SphereScale(s) => {
                    let rho = (SPHERE_RADIUS_SQ * s[m]).sqrt();
                    (radius / rho, faces.last().unwrap().1)
                }
                _ => (radius, faces.last().unwrap().1),
            };
            let measure = |a: f64, b: f64| if *sphere { a.cos() - b.cos() } else { b.powi(n) - a.powi(n) };
            let w = faces
                .iter()
                .map(|&(a, b)| {
                    if coord >= b {
                        1.0
                    } else if coord <= a {
                        0.0
                    } else {
                        measure(a, coord) / measure(a, b)
                    }
                })
                .collect();
            let truncated = !complex.closed && coord > outer * (1.0 + 1e-12);
            Ok((w, truncated))
        }
        Structure::Planar { .. } => {
            let d = distance_from(complex, center, m)?;
            let v = complex.volumes_at(m);
            let w: Vec<f64> = d.iter().zip(v).map(|(d, v)| (0.5 + (radius - d) / v.sqrt()).clamp(0.0, 1.0)).collect();
            let truncated = complex.cells.iter().zip(&w).any(|(c, w)| c.boundary && *w > 0.0);
            Ok((w, truncated))
        }
    }
}

/// Volume at time `t` of the ball of `radius` about `center`.
pub fn ball_volume(complex: &DiscreteComplex, center: usize, radius: f64, t: f64) -> Result<BallVolume> {
    if !(radius > 0.0) {
        return Err(invalid("radius", format!("must be positive, got {radius}")));
    }
    let m = complex.time_index(t)?;
    let (w, truncated) = ball_weights(complex, center, radius, m)?;
    let volume = w.iter().zip(complex.volumes_at(m)).map(|(w, v)| w * v).sum();
    Ok(BallVolume { volume, truncated })
}
