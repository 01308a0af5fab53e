use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::grid::{unit_harmonic, SphericalGrid};
use crate::ambient::AmbientMetric;
use crate::error::{Error, Result};

/// A star-shaped hypersurface `y = ρ(ω) ω` sampled on a spherical grid.
#[derive(Clone, Debug)]
pub struct RadialGraph {
    grid: Arc<SphericalGrid>,
    metric: AmbientMetric,
    rho: Vec<f64>,
}

impl RadialGraph {
    /// Validates that every radius is finite and strictly outside the horizon.
    pub fn new(grid: Arc<SphericalGrid>, metric: AmbientMetric, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(Error::Domain(format!(
                "radial field has {} values, grid has {} nodes",
                rho.len(),
                grid.len()
            )));
        }
        if metric.n() != 2 {
            return Err(Error::Domain(format!(
                "radial graphs are discretized for n = 2 only, metric has n = {}",
                metric.n()
            )));
        }
        if let Some(bad) = rho.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite radius {} at {}",
                rho[bad],
                grid.node_index(bad)
            )));
        }
        let horizon = metric.horizon_radius();
        let (worst, &min) = rho
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("grid is never empty");
        if !(min > horizon) {
            return Err(Error::BelowHorizon {
                node: grid.node_index(worst),
                rho: min,
                horizon,
            });
        }
        Ok(Self { grid, metric, rho })
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn metric(&self) -> &AmbientMetric {
        &self.metric
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn into_rho(self) -> Vec<f64> {
        self.rho
    }

    /// Same grid and metric, new radii.
    pub fn with_rho(&self, rho: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), self.metric.clone(), rho)
    }

    pub fn min_rho(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_rho(&self) -> f64 {
        self.rho.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Graph rotated in longitude by a whole number of grid columns.
    pub fn rotate_columns(&self, shift: usize) -> Self {
        let n_phi = self.grid.n_phi();
        let mut rho = vec![0.0; self.rho.len()];
        for j in 0..self.grid.n_theta() {
            for k in 0..n_phi {
                rho[j * n_phi + (k + shift) % n_phi] = self.rho[j * n_phi + k];
            }
        }
        Self {
            grid: self.grid.clone(),
            metric: self.metric.clone(),
            rho,
        }
    }
}

/// Coordinate sphere `ρ ≡ r0`.
pub fn make_sphere(grid: Arc<SphericalGrid>, metric: AmbientMetric, r0: f64) -> Result<RadialGraph> {
    let rh = metric.horizon_radius();
    if !(r0.is_finite() && r0 > rh) {
        return Err(Error::Domain(format!(
            "sphere radius {r0} is not above the horizon radius {rh}"
        )));
    }
    let n = grid.len();
    RadialGraph::new(grid, metric, vec![r0; n])
}

/// `ρ ← ρ (1 + ε Y)` with `Y` the real harmonic `(l, m_idx)` scaled to `max|Y| = 1`.
pub fn perturb(graph: &RadialGraph, mode: (usize, i32), eps: f64) -> Result<RadialGraph> {
    let (l, m_idx) = mode;
    let l_max = graph.grid.l_max();
    if l > l_max || m_idx.unsigned_abs() as usize > l {
        return Err(Error::Domain(format!(
            "mode ({l}, {m_idx}) is not a harmonic of a grid with band limit {l_max}"
        )));
    }
    if eps == 0.0 {
        return Ok(graph.clone());
    }
    let y = unit_harmonic(&graph.grid, l, m_idx);
    let rho = graph
        .rho
        .iter()
        .zip(&y)
        .map(|(r, yv)| r * (1.0 + eps * yv))
        .collect();
    graph.with_rho(rho)
}

/// Plain decimal with 17 significant digits.
pub fn format_sig17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (16 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Write `theta,phi,rho` rows, θ outer and φ inner.
pub fn write_snapshot(graph: &RadialGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let grid = &graph.grid;
    let mut out = String::from("theta,phi,rho\n");
    for node in 0..grid.len() {
        let (j, k) = grid.ring_column(node);
        let _ = writeln!(
            out,
            "{},{},{}",
            format_sig17(grid.theta()[j]),
            format_sig17(grid.phi()[k]),
            format_sig17(graph.rho[node])
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a snapshot, inferring the band limit from the node count and
/// checking the coordinates against the grid.
pub fn read_snapshot(path: impl AsRef<Path>, metric: AmbientMetric) -> Result<RadialGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Snapshot {
        path: path.display().to_string(),
        message,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "theta,phi,rho" => {}
        other => return Err(bad(format!("expected header `theta,phi,rho`, found {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
        if vals.len() != 3 {
            return Err(bad(format!("line {}: expected 3 columns, found {}", i + 2, vals.len())));
        }
        rows.push([vals[0], vals[1], vals[2]]);
    }
    let half = rows.len() / 2;
    let l_plus_1 = (half as f64).sqrt().round() as usize;
    if l_plus_1 < 2 || 2 * l_plus_1 * l_plus_1 != rows.len() {
        return Err(bad(format!(
            "{} rows do not form a (L+1) x (2L+2) grid",
            rows.len()
        )));
    }
    let grid = SphericalGrid::new(l_plus_1 - 1)?;
    for (node, row) in rows.iter().enumerate() {
        let (j, k) = grid.ring_column(node);
        if (row[0] - grid.theta()[j]).abs() > 1e-12 || (row[1] - grid.phi()[k]).abs() > 1e-12 {
            return Err(bad(format!(
                "row {} has coordinates ({}, {}) but the grid node is ({}, {})",
                node + 2,
                row[0],
                row[1],
                grid.theta()[j],
                grid.phi()[k]
            )));
        }
    }
    RadialGraph::new(grid, metric, rows.iter().map(|r| r[2]).collect())
}
