//! The linearized flow operator on a CMC sphere and its spectrum.
//!
//! With a normal perturbation `η` of a CMC surface, the flow linearizes to
//! `∂_t η = 𝓛η` where
//!
//! ```text
//! 𝓛η = Δη + Vη + (1/|M|) ∫ c η dμ,   c = H² − |A|² − Ric(ν,ν)
//! ```
//!
//! and `V = Ric(ν,ν) + |A|²` ([`Variant::Full`]) or `V = Ric(ν,ν)`
//! ([`Variant::PaperL`]). The operator is discretized by a Galerkin method
//! on real spherical harmonics in the `dμ` inner product.

use std::fmt;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::diagnostics::RateFit;
use crate::error::{Error, Result};
use crate::surface::{geometry_with, GeometryFields, GeometryOptions, RadialGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    PaperL,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::PaperL => "paper_L",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    /// Remove the constant direction (`∫η dμ = 0`).
    Volume,
    /// Remove the `H`-weighted direction (`∫Hη dμ = 0`).
    Area,
    None,
}

impl Constraint {
    pub fn name(self) -> &'static str {
        match self {
            Constraint::Volume => "volume",
            Constraint::Area => "area",
            Constraint::None => "none",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Input tolerances of [`assemble`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssembleTolerances {
    /// Bound on `max|Å|`; checked for unperturbed metrics only.
    pub umbilic: f64,
    /// Bound on `max|H − h|`.
    pub cmc: f64,
}

impl Default for AssembleTolerances {
    fn default() -> Self {
        Self { umbilic: 1e-8, cmc: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    /// `(l, m_idx)` of each basis function.
    pub basis: Vec<(usize, i32)>,
    /// `⟨Y_a, 𝓛 Y_b⟩` before symmetrization.
    pub matrix: DMatrix<f64>,
    /// `⟨Y_a, Y_b⟩`.
    pub gram: DMatrix<f64>,
    /// `⟨Y_a, 1⟩`.
    pub mass: DVector<f64>,
    /// `⟨Y_a, H⟩`.
    pub h_moment: DVector<f64>,
    pub variant: Variant,
    /// `⟨1, 𝓛 1⟩ / ⟨1, 1⟩`.
    pub l0_eigenvalue: f64,
}

fn ricci_normal(graph: &RadialGraph, fields: &GeometryFields) -> Result<Vec<f64>> {
    let metric = graph.metric();
    fields
        .nodes()
        .iter()
        .map(|n| {
            let ric = metric.ricci(n.point.as_slice())?;
            let nu = DVector::from_column_slice(n.normal.as_slice());
            Ok((nu.transpose() * ric * &nu)[(0, 0)])
        })
        .collect()
}

/// Galerkin matrix of 𝓛 on harmonics of degree ≤ `l_op`.
pub fn assemble(
    surface: &RadialGraph,
    l_op: usize,
    variant: Variant,
    tol: &AssembleTolerances,
) -> Result<LinearizedOperator> {
    let grid = surface.grid();
    if l_op > grid.l_max() {
        return Err(Error::Domain(format!(
            "operator degree {l_op} exceeds the grid band limit {}",
            grid.l_max()
        )));
    }
    let fields = geometry_with(surface, &GeometryOptions::default())?;
    let nodes = fields.nodes();
    let h: Vec<f64> = fields.mean_curvature();
    let dmu = fields.area_elements();
    let area: f64 = fields.area();
    let h_avg = fields.integrate(&h) / area;
    let cmc_dev = h.iter().map(|v| (v - h_avg).abs()).fold(0.0, f64::max);
    if cmc_dev > tol.cmc {
        return Err(Error::Precondition(format!(
            "surface is not CMC: max|H - h| = {cmc_dev:.3e} > {:.1e}",
            tol.cmc
        )));
    }
    if !surface.metric().is_perturbed() && fields.max_ring() > tol.umbilic {
        return Err(Error::Precondition(format!(
            "surface is not umbilic: max|Å| = {:.3e} > {:.1e}",
            fields.max_ring(),
            tol.umbilic
        )));
    }

    let ric = ricci_normal(surface, &fields)?;
    let potential: Vec<f64> = nodes
        .iter()
        .zip(&ric)
        .map(|(n, r)| match variant {
            Variant::Full => r + n.a_norm2,
            Variant::PaperL => *r,
        })
        .collect();
    let c: Vec<f64> = nodes
        .iter()
        .zip(&ric)
        .map(|(n, r)| n.mean_curvature * n.mean_curvature - n.a_norm2 - r)
        .collect();

    let mut basis = Vec::with_capacity((l_op + 1) * (l_op + 1));
    for l in 0..=l_op {
        basis.push((l, 0));
        for m in 1..=l as i32 {
            basis.push((l, m));
            basis.push((l, -m));
        }
    }
    let nb = basis.len();
    let nn = nodes.len();
    // columns: basis functions; rows: nodes
    let mut y = DMatrix::<f64>::zeros(nn, nb);
    let mut yt = DMatrix::<f64>::zeros(nn, nb);
    let mut yp = DMatrix::<f64>::zeros(nn, nb);
    for (b, &(l, m)) in basis.iter().enumerate() {
        let (v, dt, dp) = grid.harmonic(l, m);
        y.set_column(b, &DVector::from_vec(v));
        yt.set_column(b, &DVector::from_vec(dt));
        yp.set_column(b, &DVector::from_vec(dp));
    }

    let weighted = |w: &dyn Fn(usize) -> f64, m: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = m.clone();
        for i in 0..nn {
            let s = w(i);
            out.row_mut(i).scale_mut(s);
        }
        out
    };
    let gram = y.transpose() * weighted(&|i| dmu[i], &y);
    let pot = y.transpose() * weighted(&|i| dmu[i] * potential[i], &y);
    let g11 = |i: usize| dmu[i] * nodes[i].metric_inv[(0, 0)];
    let g12 = |i: usize| dmu[i] * nodes[i].metric_inv[(0, 1)];
    let g22 = |i: usize| dmu[i] * nodes[i].metric_inv[(1, 1)];
    let cross = yt.transpose() * weighted(&g12, &yp);
    let stiffness = yt.transpose() * weighted(&g11, &yt)
        + &cross
        + cross.transpose()
        + yp.transpose() * weighted(&g22, &yp);
    let mass = y.transpose() * DVector::from_vec(dmu.clone());
    let c_moment = y.transpose() * DVector::from_iterator(nn, (0..nn).map(|i| dmu[i] * c[i]));
    let h_moment = y.transpose() * DVector::from_iterator(nn, (0..nn).map(|i| dmu[i] * h[i]));
    let nonlocal = &mass * c_moment.transpose() / area;
    let matrix = pot - stiffness + nonlocal;

    let int_v: f64 = fields.integrate(&potential);
    let int_c: f64 = fields.integrate(&c);
    let l0_eigenvalue = (int_v + int_c) / area;

    Ok(LinearizedOperator {
        basis,
        matrix,
        gram,
        mass,
        h_moment,
        variant,
        l0_eigenvalue,
    })
}

impl LinearizedOperator {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// `max|M − Mᵀ|` relative to `max|M|`.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.matrix.amax().max(f64::MIN_POSITIVE);
        (&self.matrix - self.matrix.transpose()).amax() / scale
    }

    /// Largest entry coupling different degrees, relative to `max|M|`.
    pub fn cross_degree_defect(&self) -> f64 {
        let scale = self.matrix.amax().max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for (a, ba) in self.basis.iter().enumerate() {
            for (b, bb) in self.basis.iter().enumerate() {
                if ba.0 != bb.0 {
                    worst = worst.max(self.matrix[(a, b)].abs());
                }
            }
        }
        worst / scale
    }

    /// Operator compressed to the basis functions selected by `keep`, e.g. a
    /// symmetry sector that a given initial datum cannot leave.
    pub fn restrict(&self, keep: impl Fn(usize, i32) -> bool) -> Result<Self> {
        let idx: Vec<usize> = (0..self.basis.len()).filter(|&a| keep(self.basis[a].0, self.basis[a].1)).collect();
        if idx.is_empty() {
            return Err(Error::Domain("restriction keeps no basis functions".into()));
        }
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])]);
        let pick_v = |v: &DVector<f64>| DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]));
        Ok(Self {
            basis: idx.iter().map(|&i| self.basis[i]).collect(),
            matrix: pick(&self.matrix),
            gram: pick(&self.gram),
            mass: pick_v(&self.mass),
            h_moment: pick_v(&self.h_moment),
            variant: self.variant,
            l0_eigenvalue: self.l0_eigenvalue,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SpectrumReport {
    /// Eigenvalues on the constrained subspace, ascending.
    pub eigenvalues: Vec<f64>,
    /// Dominant harmonic degree of each eigenvector.
    pub degree_hints: Vec<usize>,
    /// `−max(eigenvalues)`.
    pub predicted_rate: f64,
    pub l0_eigenvalue: f64,
    pub constraint: Constraint,
    pub variant: Variant,
}

impl SpectrumReport {
    pub fn largest(&self) -> f64 {
        *self.eigenvalues.last().expect("spectrum is never empty")
    }

    /// Largest eigenvalue whose eigenvector is dominated by degree `l`.
    pub fn largest_of_degree(&self, l: usize) -> Option<f64> {
        self.eigenvalues
            .iter()
            .zip(&self.degree_hints)
            .filter(|(_, d)| **d == l)
            .map(|(v, _)| *v)
            .next_back()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,degree_hint,eigenvalue\n");
        for (i, (v, d)) in self.eigenvalues.iter().zip(&self.degree_hints).enumerate() {
            let _ = writeln!(out, "{i},{d},{v:e}");
        }
        out
    }
}

/// Orthonormal basis (columns) of the complement of `z`.
fn complement(z: &DVector<f64>) -> DMatrix<f64> {
    let n = z.len();
    let norm = z.norm();
    let mut v = z / norm;
    // Householder reflector mapping z/|z| to ±e₀
    let s = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += s;
    let vv = v.dot(&v);
    let mut h = DMatrix::<f64>::identity(n, n);
    h -= &v * v.transpose() * (2.0 / vv);
    h.columns(1, n - 1).into_owned()
}

/// Eigenpairs of a symmetric matrix, checked by their residuals.
fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let a = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let evd = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))?;
    let u = evd.U();
    let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    let values: Vec<f64> = (0..n).map(|k| evd.S().column_vector()[k]).collect();
    let scale = m.amax().max(1.0);
    for (k, lambda) in values.iter().enumerate() {
        let v = vectors.column(k);
        let resid = (m * v - v * *lambda).norm();
        if resid > 1e-9 * scale {
            return Err(Error::Numerical(format!(
                "eigenpair {k} has residual {resid:.3e}"
            )));
        }
    }
    Ok((values, vectors))
}

pub fn spectrum(op: &LinearizedOperator, constraint: Constraint) -> Result<SpectrumReport> {
    let sym = (&op.matrix + op.matrix.transpose()) * 0.5;
    let chol = op
        .gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("Gram matrix of the harmonic basis is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let whitened = &l_inv * &sym * l_inv.transpose();
    let whitened = (&whitened + whitened.transpose()) * 0.5;

    let direction = match constraint {
        Constraint::Volume => Some(&op.mass),
        Constraint::Area => Some(&op.h_moment),
        Constraint::None => None,
    };
    // map from reduced coordinates back to whitened ones
    let q = match direction {
        Some(u) => {
            let z = &l_inv * u;
            if z.norm() == 0.0 {
                return Err(Error::Degenerate(format!("{constraint} constraint direction vanishes")));
            }
            complement(&z)
        }
        None => DMatrix::identity(op.len(), op.len()),
    };
    let reduced = q.transpose() * &whitened * &q;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let (values, vectors) = symmetric_eigen(&reduced)?;
    let to_coeffs = l_inv.transpose() * &q;

    let max_degree = op.basis.iter().map(|b| b.0).max().unwrap_or(0);
    let mut pairs: Vec<(f64, usize)> = (0..values.len())
        .map(|k| {
            let x = &to_coeffs * vectors.column(k);
            let mut power = vec![0.0; max_degree + 1];
            for (a, b) in op.basis.iter().enumerate() {
                power[b.0] += x[a] * x[a];
            }
            let hint = power
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(d, _)| d)
                .unwrap_or(0);
            (values[k], hint)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let predicted_rate = -eigenvalues.last().copied().unwrap_or(f64::NAN);
    Ok(SpectrumReport {
        degree_hints: pairs.iter().map(|p| p.1).collect(),
        eigenvalues,
        predicted_rate,
        l0_eigenvalue: op.l0_eigenvalue,
        constraint,
        variant: op.variant,
    })
}

/// Minimum goodness of fit accepted by [`compare_rates`].
pub const MIN_FIT_R2: f64 = 0.99;

/// `|predicted − observed| / predicted`.
pub fn compare_rates(report: &SpectrumReport, observed: &RateFit) -> Result<f64> {
    compare_rate_values(report.predicted_rate, observed)
}

pub fn compare_rate_values(predicted: f64, observed: &RateFit) -> Result<f64> {
    if !(predicted > 0.0) {
        return Err(Error::NotApplicable(format!(
            "predicted rate {predicted:.3e} is not positive: a neutral or unstable mode dominates"
        )));
    }
    if observed.r2 < MIN_FIT_R2 {
        return Err(Error::Precondition(format!(
            "observed fit has r2 = {:.4} < {MIN_FIT_R2}",
            observed.r2
        )));
    }
    Ok((predicted - observed.lambda).abs() / predicted)
}
