//! Schwarzschild and asymptotically Schwarzschild metrics in Cartesian coordinates.
//!
//! The unperturbed metric is conformally flat, `ḡ = φ^{4/(n−1)} δ` with
//! `φ = 1 + m / (2 r^{n−1})`. An optional [`Perturbation`] adds a symmetric
//! tensor `P` on top. Mass zero is admitted and gives flat space exactly.

mod perturbation;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::numerics::central_difference4;

pub use perturbation::{Perturbation, PerturbationJet, Quadrupole};

/// How many derivatives of the metric to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JetOrder {
    First,
    Second,
}

/// Relative step of the 4th-order stencil used for `∂Γ` of the perturbation part.
pub const RICCI_FD_STEP: f64 = 1e-5;

#[derive(Clone)]
pub struct AmbientMetric {
    n: usize,
    mass: f64,
    perturbation: Option<Arc<dyn Perturbation>>,
}

impl fmt::Debug for AmbientMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AmbientMetric")
            .field("n", &self.n)
            .field("mass", &self.mass)
            .field("perturbation", &self.perturbation_id())
            .finish()
    }
}

/// `φ`, `∂φ` and `∂²φ` at a point.
#[derive(Clone, Debug)]
pub struct ConformalFactor {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Metric and its Cartesian derivatives at a point: `dg[c] = ∂_c ḡ`,
/// `d2g[c][e] = ∂_c ∂_e ḡ`.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub point: DVector<f64>,
    pub g: DMatrix<f64>,
    pub dg: Vec<DMatrix<f64>>,
    pub d2g: Option<Vec<Vec<DMatrix<f64>>>>,
}

/// Christoffel symbols `Γ^a_{bc}` of the ambient metric.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffels {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffels {
    fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.dim + b) * self.dim + c]
    }

    #[inline]
    fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.dim + b) * self.dim + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Metric, inverse and Christoffels at a point of three-dimensional space.
/// This is the per-node workhorse of the surface geometry.
#[derive(Clone, Copy, Debug)]
pub struct Frame3 {
    pub g: Matrix3<f64>,
    pub g_inv: Matrix3<f64>,
    /// `gamma[a][b][c] = Γ^a_{bc}`.
    pub gamma: [[[f64; 3]; 3]; 3],
}

impl Frame3 {
    /// `Γ(u, v)^a = Γ^a_{bc} u^b v^c`.
    #[inline]
    pub fn contract(&self, u: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for a in 0..3 {
            let mut s = 0.0;
            for b in 0..3 {
                for c in 0..3 {
                    s += self.gamma[a][b][c] * u[b] * v[c];
                }
            }
            out[a] = s;
        }
        out
    }
}

impl AmbientMetric {
    /// Schwarzschild space of mass `mass` over R^{n+1}; `mass = 0` is flat space.
    pub fn schwarzschild(n: usize, mass: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("hypersurface dimension must be at least 2, got {n}")));
        }
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(Error::Domain(format!("mass must be finite and nonnegative, got {mass}")));
        }
        Ok(Self {
            n,
            mass,
            perturbation: None,
        })
    }

    pub fn euclidean(n: usize) -> Result<Self> {
        Self::schwarzschild(n, 0.0)
    }

    /// Attach a perturbation and check that the metric stays positive
    /// definite on a set of sample points outside the horizon.
    pub fn with_perturbation(mut self, perturbation: Arc<dyn Perturbation>) -> Result<Self> {
        self.perturbation = Some(perturbation);
        self.check_positive_definite()?;
        Ok(self)
    }

    /// Built-in perturbation by identifier: `none` or `quadrupole(ε)`.
    pub fn with_named_perturbation(self, id: &str) -> Result<Self> {
        let id = id.trim();
        if id == "none" {
            return Ok(self);
        }
        let inner = id
            .strip_prefix("quadrupole(")
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| Error::Domain(format!("unknown perturbation `{id}` (expected `none` or `quadrupole(eps)`)")))?;
        let eps: f64 = inner
            .trim()
            .parse()
            .map_err(|_| Error::Domain(format!("bad quadrupole amplitude `{inner}`")))?;
        let q = Quadrupole::new(eps, self.n, self.horizon_radius())?;
        self.with_perturbation(Arc::new(q))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Ambient dimension `n + 1`.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_perturbed(&self) -> bool {
        self.perturbation.is_some()
    }

    pub fn perturbation(&self) -> Option<&Arc<dyn Perturbation>> {
        self.perturbation.as_ref()
    }

    pub fn perturbation_id(&self) -> String {
        self.perturbation.as_ref().map_or_else(|| "none".to_string(), |p| p.id())
    }

    /// Radius of the horizon `(m/2)^{1/(n−1)}`; zero in flat space.
    pub fn horizon_radius(&self) -> f64 {
        if self.mass == 0.0 {
            0.0
        } else {
            (self.mass / 2.0).powf(1.0 / (self.n as f64 - 1.0))
        }
    }

    /// Exponent `4/(n−1)` of the conformal factor in the metric.
    pub fn conformal_exponent(&self) -> f64 {
        4.0 / (self.n as f64 - 1.0)
    }

    /// `φ` on a coordinate sphere of radius `r`, with its radial derivative.
    pub fn radial_conformal_factor(&self, r: f64) -> (f64, f64) {
        let nm1 = self.n as f64 - 1.0;
        let phi = 1.0 + self.mass / (2.0 * r.powf(nm1));
        let dphi = -0.5 * self.mass * nm1 * r.powf(-(self.n as f64));
        (phi, dphi)
    }

    fn check_dim(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim() {
            return Err(Error::Domain(format!(
                "point has {} coordinates, ambient dimension is {}",
                point.len(),
                self.dim()
            )));
        }
        Ok(point.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    fn check_outside(&self, point: &[f64]) -> Result<f64> {
        let r = self.check_dim(point)?;
        let rh = self.horizon_radius();
        if !(r > rh) {
            return Err(Error::Domain(format!(
                "point at radius {r} is not outside the horizon radius {rh}"
            )));
        }
        Ok(r)
    }

    pub fn conformal_factor(&self, point: &[f64]) -> Result<ConformalFactor> {
        let r = self.check_dim(point)?;
        if r == 0.0 {
            return Err(Error::Domain("conformal factor is singular at the origin".into()));
        }
        let d = self.dim();
        let n = self.n as f64;
        let half_m = 0.5 * self.mass;
        let value = 1.0 + half_m * r.powf(1.0 - n);
        // ∂_a r^{1−n} = (1−n) r^{−n−1} y_a
        let c1 = half_m * (1.0 - n) * r.powf(-n - 1.0);
        let c2 = half_m * (1.0 - n) * (-n - 1.0) * r.powf(-n - 3.0);
        let gradient = DVector::from_fn(d, |a, _| c1 * point[a]);
        let hessian = DMatrix::from_fn(d, d, |a, b| {
            let dab = if a == b { c1 } else { 0.0 };
            dab + c2 * point[a] * point[b]
        });
        Ok(ConformalFactor {
            value,
            gradient,
            hessian,
        })
    }

    pub fn metric_jet(&self, point: &[f64], order: JetOrder) -> Result<MetricJet> {
        self.check_outside(point)?;
        let d = self.dim();
        let cf = self.conformal_factor(point)?;
        let p = self.conformal_exponent();
        let psi = cf.value.powf(p);
        let dpsi = &cf.gradient * (p * cf.value.powf(p - 1.0));
        let eye = DMatrix::<f64>::identity(d, d);
        let mut g = &eye * psi;
        let mut dg: Vec<DMatrix<f64>> = (0..d).map(|c| &eye * dpsi[c]).collect();
        let mut d2g = (order == JetOrder::Second).then(|| {
            let a = p * (p - 1.0) * cf.value.powf(p - 2.0);
            let b = p * cf.value.powf(p - 1.0);
            (0..d)
                .map(|c| {
                    (0..d)
                        .map(|e| &eye * (a * cf.gradient[c] * cf.gradient[e] + b * cf.hessian[(c, e)]))
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        });
        if let Some(pert) = &self.perturbation {
            let jet = pert.evaluate(point, order);
            g += &jet.p;
            for (dst, src) in dg.iter_mut().zip(&jet.dp) {
                *dst += src;
            }
            if let (Some(dst), Some(src)) = (d2g.as_mut(), jet.d2p.as_ref()) {
                for c in 0..d {
                    for e in 0..d {
                        dst[c][e] += &src[c][e];
                    }
                }
            }
        }
        Ok(MetricJet {
            point: DVector::from_column_slice(point),
            g,
            dg,
            d2g,
        })
    }

    /// `Γ^a_{bc} = ½ ḡ^{ad} (∂_b ḡ_{dc} + ∂_c ḡ_{db} − ∂_d ḡ_{bc})` from the first-order jet.
    pub fn christoffels(&self, point: &[f64]) -> Result<Christoffels> {
        let jet = self.metric_jet(point, JetOrder::First)?;
        let d = self.dim();
        let g_inv = jet
            .g
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular ambient metric".into()))?;
        let mut out = Christoffels::zeros(d);
        for b in 0..d {
            for c in b..d {
                // lowered symbol Γ_{d,bc}
                let lowered: Vec<f64> = (0..d)
                    .map(|dd| 0.5 * (jet.dg[b][(dd, c)] + jet.dg[c][(dd, b)] - jet.dg[dd][(b, c)]))
                    .collect();
                for a in 0..d {
                    let v: f64 = (0..d).map(|dd| g_inv[(a, dd)] * lowered[dd]).sum();
                    out.set(a, b, c, v);
                    out.set(a, c, b, v);
                }
            }
        }
        Ok(out)
    }

    /// Closed-form Christoffels of the conformal part and their first
    /// derivatives. With `ḡ = e^{2f} δ`:
    /// `Γ^a_{bc} = δ^a_b f_c + δ^a_c f_b − δ_{bc} f_a`.
    fn conformal_christoffels(&self, point: &[f64]) -> Result<(Christoffels, Vec<Christoffels>)> {
        let cf = self.conformal_factor(point)?;
        let d = self.dim();
        let k = 2.0 / (self.n as f64 - 1.0);
        let phi = cf.value;
        let f1: Vec<f64> = (0..d).map(|a| k * cf.gradient[a] / phi).collect();
        let f2 = DMatrix::from_fn(d, d, |a, b| {
            k * (cf.hessian[(a, b)] / phi - cf.gradient[a] * cf.gradient[b] / (phi * phi))
        });
        let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        let mut gamma = Christoffels::zeros(d);
        let mut dgamma: Vec<Christoffels> = (0..d).map(|_| Christoffels::zeros(d)).collect();
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    gamma.set(a, b, c, delta(a, b) * f1[c] + delta(a, c) * f1[b] - delta(b, c) * f1[a]);
                    for (mu, dgm) in dgamma.iter_mut().enumerate() {
                        dgm.set(
                            a,
                            b,
                            c,
                            delta(a, b) * f2[(c, mu)] + delta(a, c) * f2[(b, mu)] - delta(b, c) * f2[(a, mu)],
                        );
                    }
                }
            }
        }
        Ok((gamma, dgamma))
    }

    /// Ricci tensor `R̄_{bc} = ∂_a Γ^a_{bc} − ∂_c Γ^a_{ab} + Γ^a_{al} Γ^l_{bc} − Γ^a_{cl} Γ^l_{ab}`.
    ///
    /// `∂Γ` is analytic for the conformal part; the perturbation's contribution
    /// to `∂Γ` comes from a 4th-order central difference of
    /// `Γ_total − Γ_conformal` with step `1e-5 · r`.
    pub fn ricci(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        let r = self.check_outside(point)?;
        let d = self.dim();
        let gamma = self.christoffels(point)?;
        let (_, mut dgamma) = self.conformal_christoffels(point)?;

        if self.perturbation.is_some() {
            let h = RICCI_FD_STEP * r;
            let required = self.horizon_radius() + 2.0 * h;
            if !(r > required) {
                return Err(Error::Stencil { required, actual: r });
            }
            for (mu, dgm) in dgamma.iter_mut().enumerate() {
                let diff = central_difference4(
                    |s| {
                        let mut y = point.to_vec();
                        y[mu] += s;
                        let total = self.christoffels(&y).expect("stencil point outside horizon");
                        let (conf, _) = self.conformal_christoffels(&y).expect("stencil point away from origin");
                        total.data.iter().zip(&conf.data).map(|(t, c)| t - c).collect()
                    },
                    h,
                );
                for (dst, v) in dgm.data.iter_mut().zip(diff) {
                    *dst += v;
                }
            }
        }

        let mut ric = DMatrix::zeros(d, d);
        for b in 0..d {
            for c in b..d {
                let mut s = 0.0;
                for a in 0..d {
                    s += dgamma[a].get(a, b, c) - dgamma[c].get(a, a, b);
                    for l in 0..d {
                        s += gamma.get(a, a, l) * gamma.get(l, b, c) - gamma.get(a, c, l) * gamma.get(l, a, b);
                    }
                }
                ric[(b, c)] = s;
                ric[(c, b)] = s;
            }
        }
        Ok(ric)
    }

    /// Scalar curvature `ḡ^{ab} R̄_{ab}`.
    pub fn scalar_curvature(&self, point: &[f64]) -> Result<f64> {
        let ric = self.ricci(point)?;
        let g = self.metric_jet(point, JetOrder::First)?.g;
        let g_inv = g
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular ambient metric".into()))?;
        Ok(g_inv.component_mul(&ric).sum())
    }

    /// Metric, inverse and Christoffels at a point of R³ (n = 2 only).
    pub fn frame3(&self, y: &Vector3<f64>) -> Result<Frame3> {
        debug_assert_eq!(self.n, 2);
        let r = y.norm();
        let rh = self.horizon_radius();
        if !(r > rh) {
            return Err(Error::Domain(format!(
                "point at radius {r} is not outside the horizon radius {rh}"
            )));
        }
        // n = 2: ψ = φ⁴, φ = 1 + m/(2r)
        let phi = 1.0 + 0.5 * self.mass / r;
        let dphi_coef = -0.5 * self.mass / (r * r * r);
        let phi3 = phi * phi * phi;
        let psi = phi3 * phi;
        let dpsi = y * (4.0 * phi3 * dphi_coef);
        let mut g = Matrix3::identity() * psi;
        let mut dg = [
            Matrix3::identity() * dpsi[0],
            Matrix3::identity() * dpsi[1],
            Matrix3::identity() * dpsi[2],
        ];
        if let Some(p) = &self.perturbation {
            let (pm, dpm) = p.evaluate3(y);
            g += pm;
            for c in 0..3 {
                dg[c] += dpm[c];
            }
        }
        let g_inv = g
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular ambient metric".into()))?;
        let mut gamma = [[[0.0; 3]; 3]; 3];
        for b in 0..3 {
            for c in b..3 {
                let lowered = [
                    0.5 * (dg[b][(0, c)] + dg[c][(0, b)] - dg[0][(b, c)]),
                    0.5 * (dg[b][(1, c)] + dg[c][(1, b)] - dg[1][(b, c)]),
                    0.5 * (dg[b][(2, c)] + dg[c][(2, b)] - dg[2][(b, c)]),
                ];
                for a in 0..3 {
                    let v = g_inv[(a, 0)] * lowered[0] + g_inv[(a, 1)] * lowered[1] + g_inv[(a, 2)] * lowered[2];
                    gamma[a][b][c] = v;
                    gamma[a][c][b] = v;
                }
            }
        }
        Ok(Frame3 { g, g_inv, gamma })
    }

    /// `√det ḡ` at a point of R³ (n = 2 only): the coordinate volume density.
    pub fn volume_density3(&self, y: &Vector3<f64>) -> f64 {
        let r = y.norm();
        let phi = 1.0 + 0.5 * self.mass / r;
        let psi = phi.powi(4);
        match &self.perturbation {
            None => psi * psi.sqrt(),
            Some(p) => (Matrix3::identity() * psi + p.value3(y)).determinant().sqrt(),
        }
    }

    /// Radii where radial quadratures should split panels.
    pub fn radial_breakpoints(&self) -> Vec<f64> {
        self.perturbation
            .as_ref()
            .map(|p| p.radial_breakpoints())
            .unwrap_or_default()
    }

    /// Cholesky feasibility of `ḡ` on shells outside the horizon.
    pub fn check_positive_definite(&self) -> Result<()> {
        let rh = self.horizon_radius();
        let base = if rh > 0.0 { rh } else { 1.0 };
        let d = self.dim();
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for a in 0..d {
            for s in [-1.0, 1.0] {
                let mut v = vec![0.0; d];
                v[a] = s;
                dirs.push(v);
            }
        }
        for k in 0..16 {
            let v: Vec<f64> = (0..d)
                .map(|a| ((k * 7 + a * 3) as f64 * 0.9).sin() + 0.1 * a as f64)
                .collect();
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            dirs.push(v.iter().map(|x| x / nrm).collect());
        }
        for scale in [1.01, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 5.0, 10.0, 100.0] {
            for dir in &dirs {
                let y: Vec<f64> = dir.iter().map(|x| x * scale * base).collect();
                let jet = self.metric_jet(&y, JetOrder::First)?;
                if jet.g.clone().cholesky().is_none() {
                    return Err(Error::Domain(format!(
                        "perturbed metric is not positive definite at {y:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}
