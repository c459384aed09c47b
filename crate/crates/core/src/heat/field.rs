use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::BoundaryCondition;
use crate::error::{invalid, Result};
use crate::geometry::DiscreteComplex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    ConjugateHeat,
    LinearParabolic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub equation: Equation,
    pub bc: BoundaryCondition,
    /// `(cell, time)` of a δ source.
    pub source: Option<(usize, f64)>,
}

/// Values `u_i(t_m)` for the time nodes `first_node..=last` of a shared complex.
#[derive(Clone, Debug)]
pub struct SpaceTimeField {
    complex: Arc<DiscreteComplex>,
    first_node: usize,
    values: Vec<f64>,
    meta: FieldMeta,
}

impl SpaceTimeField {
    pub(crate) fn new(complex: Arc<DiscreteComplex>, first_node: usize, values: Vec<f64>, meta: FieldMeta) -> Self {
        debug_assert_eq!(values.len() % complex.len(), 0);
        Self { complex, first_node, values, meta }
    }

    pub fn complex(&self) -> &Arc<DiscreteComplex> {
        &self.complex
    }

    pub fn meta(&self) -> &FieldMeta {
        &self.meta
    }

    pub fn n_cells(&self) -> usize {
        self.complex.len()
    }

    pub fn n_times(&self) -> usize {
        self.values.len() / self.complex.len()
    }

    /// Complex time-node index of local time `k`.
    pub fn node(&self, k: usize) -> usize {
        self.first_node + k
    }

    pub fn time(&self, k: usize) -> f64 {
        self.complex.times().nodes()[self.first_node + k]
    }

    pub fn times(&self) -> &[f64] {
        &self.complex.times().nodes()[self.first_node..self.first_node + self.n_times()]
    }

    /// Local index of time `t`.
    pub fn local_index(&self, t: f64) -> Result<usize> {
        let m = self.complex.time_index(t)?;
        if m < self.first_node || m >= self.first_node + self.n_times() {
            return Err(invalid("t", format!("{t} is outside the field's time range")));
        }
        Ok(m - self.first_node)
    }

    pub fn at(&self, k: usize) -> &[f64] {
        let n = self.n_cells();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Σ_i u_i(t_k) V_i(t_k)` for every stored time.
    pub fn mass_trace(&self) -> Vec<f64> {
        (0..self.n_times())
            .map(|k| self.at(k).iter().zip(self.complex.volumes_at(self.node(k))).map(|(u, v)| u * v).sum())
            .collect()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |a, v| a.min(*v))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Columnar text: `time cell value`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("time cell value\n");
        for k in 0..self.n_times() {
            let t = self.time(k);
            for (i, v) in self.at(k).iter().enumerate() {
                let _ = writeln!(s, "{t:.16e} {i} {v:.16e}");
            }
        }
        s
    }

    /// Compact binary dump: magic `RLFIELD\0`, version (u32), cell count
    /// (u64), time count (u64), the times, then the values row-major by time.
    /// All numbers little-endian; floats are IEEE-754 binary64.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + 8 * (self.n_times() + self.values.len()));
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_cells() as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_times() as u64).to_le_bytes());
        for t in self.times() {
            out.extend_from_slice(&t.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

pub const BINARY_MAGIC: &[u8; 8] = b"RLFIELD\0";
pub const BINARY_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryField {
    pub cells: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn read_binary(bytes: &[u8]) -> Result<BinaryField> {
    if bytes.len() < 28 || &bytes[..8] != BINARY_MAGIC {
        return Err(invalid("field", "not a field dump"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(invalid("field", format!("unsupported version {version}")));
    }
    let cells = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let n_times = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    let expected = 28 + 8 * (n_times + cells * n_times);
    if bytes.len() != expected {
        return Err(invalid("field", format!("length {} does not match header ({expected})", bytes.len())));
    }
    let floats: Vec<f64> = bytes[28..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(BinaryField { cells, times: floats[..n_times].to_vec(), values: floats[n_times..].to_vec() })
}
