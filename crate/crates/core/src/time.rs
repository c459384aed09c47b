use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Strictly increasing list of time nodes `t_0 < t_1 < ... < t_N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(invalid("time_grid", "at least two nodes are required"));
        }
        if nodes.iter().any(|t| !t.is_finite()) {
            return Err(invalid("time_grid", "non-finite node"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("time_grid", "nodes must be strictly increasing"));
        }
        Ok(Self { nodes })
    }

    pub fn uniform(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps == 0 || end <= start {
            return Err(invalid("time_grid", format!("empty interval [{start}, {end}] / {steps}")));
        }
        let dt = (end - start) / steps as f64;
        let mut nodes: Vec<f64> = (0..=steps).map(|m| start + m as f64 * dt).collect();
        nodes[steps] = end;
        Self::from_nodes(nodes)
    }

    /// Geometrically graded steps: the first step is `first_step`, each
    /// following step grows by `growth` until it reaches `max_step`.
    /// The last step is stretched or merged so that `end` is hit exactly.
    pub fn graded(start: f64, end: f64, first_step: f64, max_step: f64, growth: f64) -> Result<Self> {
        if !(first_step > 0.0 && max_step >= first_step && growth >= 1.0) || end <= start {
            return Err(invalid(
                "time_grid",
                format!("graded grid needs 0 < first_step <= max_step, growth >= 1 (got {first_step}, {max_step}, {growth})"),
            ));
        }
        let mut nodes = vec![start];
        let mut t = start;
        let mut dt = first_step;
        loop {
            if t + dt >= end - 0.25 * dt {
                break;
            }
            t += dt;
            nodes.push(t);
            dt = (dt * growth).min(max_step);
        }
        nodes.push(end);
        Self::from_nodes(nodes)
    }

    /// Every step split into `factor` equal sub-steps.
    pub fn refined(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let mut nodes = Vec::with_capacity((self.nodes.len() - 1) * factor + 1);
        for w in self.nodes.windows(2) {
            for j in 0..factor {
                nodes.push(w[0] + (w[1] - w[0]) * j as f64 / factor as f64);
            }
        }
        nodes.push(*self.nodes.last().unwrap());
        Self { nodes }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn step(&self, m: usize) -> f64 {
        self.nodes[m + 1] - self.nodes[m]
    }

    pub fn max_step(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of the node equal to `t` up to a relative tolerance of 1e-9.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * (1.0 + t.abs());
        let pos = self.nodes.partition_point(|&x| x < t - tol);
        match self.nodes.get(pos) {
            Some(&x) if (x - t).abs() <= tol => Ok(pos),
            _ => Err(Error::NotATimeNode(t)),
        }
    }

    /// Sub-grid from node `from` to node `to` inclusive.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if to <= from || to >= self.nodes.len() {
            return Err(invalid("time_grid", format!("bad node range {from}..={to}")));
        }
        Ok(Self { nodes: self.nodes[from..=to].to_vec() })
    }
}
