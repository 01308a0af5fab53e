//! Perturbations of the conformal Schwarzschild metric.

use std::fmt;

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::JetOrder;
use crate::error::{Error, Result};

/// Value and Cartesian derivatives of a symmetric perturbation tensor `P_{ab}`.
///
/// `dp[c]` holds `∂_c P`, `d2p[c][e]` holds `∂_c ∂_e P`.
#[derive(Clone, Debug)]
pub struct PerturbationJet {
    pub p: DMatrix<f64>,
    pub dp: Vec<DMatrix<f64>>,
    pub d2p: Option<Vec<Vec<DMatrix<f64>>>>,
}

/// A user-supplied symmetric 2-tensor added to the conformal metric.
///
/// Implementations supply analytic first and second derivatives; the only
/// numerical differentiation happens inside the Ricci stencil.
pub trait Perturbation: Send + Sync + fmt::Debug {
    /// Identifier, e.g. `quadrupole(0.001)`.
    fn id(&self) -> String;

    /// Decay exponent `k` in `|P| = O(r^{-k})`.
    fn decay_order(&self) -> f64;

    fn evaluate(&self, point: &[f64], order: JetOrder) -> PerturbationJet;

    /// Three-dimensional fast path: `(P, [∂_x P, ∂_y P, ∂_z P])`.
    fn evaluate3(&self, y: &Vector3<f64>) -> (Matrix3<f64>, [Matrix3<f64>; 3]) {
        let jet = self.evaluate(y.as_slice(), JetOrder::First);
        let p = Matrix3::from_fn(|i, j| jet.p[(i, j)]);
        let dp = [0, 1, 2].map(|c| Matrix3::from_fn(|i, j| jet.dp[c][(i, j)]));
        (p, dp)
    }

    /// `P` alone at a point of R³.
    fn value3(&self, y: &Vector3<f64>) -> Matrix3<f64> {
        self.evaluate3(y).0
    }

    /// Radii where the perturbation is only finitely smooth (cutoff edges).
    /// Radial quadratures split their panels there.
    fn radial_breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Septic smoothstep: 0 for t ≤ 0, 1 for t ≥ 1, C³ at both ends.
fn smoothstep(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let u = 1.0 - t;
    let s = t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3));
    let ds = 140.0 * t.powi(3) * u.powi(3);
    let d2s = 420.0 * t * t * u * u * (1.0 - 2.0 * t);
    (s, ds, d2s)
}

/// `P_{ab} = ε c(r) r^{-(n+1)} Y(y/r) δ_{ab}` with `Y = (3 cos²θ − 1)/2` the
/// max-normalized zonal degree-2 harmonic (axis = last coordinate) and `c` a
/// smooth cutoff that vanishes for `r ≤ 1.5 r_h` and equals one for `r ≥ 2 r_h`.
#[derive(Clone, Debug)]
pub struct Quadrupole {
    pub epsilon: f64,
    n: usize,
    inner: f64,
    outer: f64,
}

impl Quadrupole {
    pub fn new(epsilon: f64, n: usize, horizon: f64) -> Result<Self> {
        if !epsilon.is_finite() {
            return Err(Error::Domain(format!("quadrupole amplitude {epsilon} is not finite")));
        }
        if horizon <= 0.0 {
            return Err(Error::Domain(
                "quadrupole perturbation needs a positive mass (its cutoff sits at twice the horizon)".into(),
            ));
        }
        Ok(Self {
            epsilon,
            n,
            inner: 1.5 * horizon,
            outer: 2.0 * horizon,
        })
    }

    /// Allocation-free scalar jet in three dimensions.
    fn scalar3(&self, y: &Vector3<f64>) -> (f64, [f64; 3]) {
        let r2 = y.norm_squared();
        let r = r2.sqrt();
        let width = self.outer - self.inner;
        let (c, c1, _) = smoothstep((r - self.inner) / width);
        if c == 0.0 && c1 == 0.0 {
            return (0.0, [0.0; 3]);
        }
        let c1 = c1 / width;
        let a = (self.n + 3) as i32;
        let b = (self.n + 1) as i32;
        let ra = r.powi(-a);
        let rb = r.powi(-b);
        let z = y[2];
        let s = 1.5 * z * z * ra - 0.5 * rb;
        let mut dq = [0.0; 3];
        for i in 0..3 {
            let dz = if i == 2 { 2.0 * z * ra } else { 0.0 };
            let ds = 1.5 * (dz - a as f64 * z * z * ra / r2 * y[i]) + 0.5 * b as f64 * rb / r2 * y[i];
            dq[i] = self.epsilon * (c * ds + s * c1 * y[i] / r);
        }
        (self.epsilon * c * s, dq)
    }

    /// Scalar amplitude `q` with gradient and (optionally) Hessian.
    fn scalar_jet(&self, y: &[f64], with_hessian: bool) -> (f64, Vec<f64>, Option<Vec<Vec<f64>>>) {
        let d = y.len();
        let zi = d - 1;
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        let z = y[zi];
        let a = (self.n + 3) as f64;
        let b = (self.n + 1) as f64;

        let (cs, cs1, cs2) = smoothstep((r - self.inner) / (self.outer - self.inner));
        let width = self.outer - self.inner;
        let (c, c1, c2) = (cs, cs1 / width, cs2 / (width * width));

        let ra = r.powf(-a);
        let rb = r.powf(-b);
        // s = 1.5 z² r^{-a} − 0.5 r^{-b}
        let s = 1.5 * z * z * ra - 0.5 * rb;
        let mut ds = vec![0.0; d];
        for i in 0..d {
            let dz = if i == zi { 2.0 * z * ra } else { 0.0 };
            let d_za = dz - a * z * z * ra / r2 * y[i];
            let d_rb = -b * rb / r2 * y[i];
            ds[i] = 1.5 * d_za - 0.5 * d_rb;
        }
        let dc: Vec<f64> = y.iter().map(|yi| c1 * yi / r).collect();

        let q = self.epsilon * c * s;
        let dq: Vec<f64> = (0..d).map(|i| self.epsilon * (c * ds[i] + s * dc[i])).collect();

        let d2q = with_hessian.then(|| {
            let mut h = vec![vec![0.0; d]; d];
            for i in 0..d {
                for j in 0..d {
                    let dij = if i == j { 1.0 } else { 0.0 };
                    let iz = if i == zi { 1.0 } else { 0.0 };
                    let jz = if j == zi { 1.0 } else { 0.0 };
                    let r_a2 = ra / r2;
                    let r_a4 = r_a2 / r2;
                    let d2_za = 2.0 * iz * jz * ra - 2.0 * a * z * iz * r_a2 * y[j] - 2.0 * a * z * jz * r_a2 * y[i]
                        + a * (a + 2.0) * z * z * r_a4 * y[i] * y[j]
                        - a * z * z * r_a2 * dij;
                    let r_b2 = rb / r2;
                    let r_b4 = r_b2 / r2;
                    let d2_rb = b * (b + 2.0) * r_b4 * y[i] * y[j] - b * r_b2 * dij;
                    let d2s = 1.5 * d2_za - 0.5 * d2_rb;
                    let d2c = c2 * y[i] * y[j] / r2 + c1 * (dij / r - y[i] * y[j] / (r2 * r));
                    h[i][j] = self.epsilon * (c * d2s + dc[i] * ds[j] + ds[i] * dc[j] + s * d2c);
                }
            }
            h
        });
        (q, dq, d2q)
    }
}

impl Perturbation for Quadrupole {
    fn id(&self) -> String {
        format!("quadrupole({})", self.epsilon)
    }

    fn decay_order(&self) -> f64 {
        (self.n + 1) as f64
    }

    fn evaluate(&self, point: &[f64], order: JetOrder) -> PerturbationJet {
        let d = point.len();
        let (q, dq, d2q) = self.scalar_jet(point, order == JetOrder::Second);
        let eye = DMatrix::<f64>::identity(d, d);
        PerturbationJet {
            p: &eye * q,
            dp: dq.iter().map(|v| &eye * *v).collect(),
            d2p: d2q.map(|h| {
                h.iter()
                    .map(|row| row.iter().map(|v| &eye * *v).collect())
                    .collect()
            }),
        }
    }

    fn evaluate3(&self, y: &Vector3<f64>) -> (Matrix3<f64>, [Matrix3<f64>; 3]) {
        let (q, dq) = self.scalar3(y);
        let eye = Matrix3::identity();
        (eye * q, [eye * dq[0], eye * dq[1], eye * dq[2]])
    }

    fn value3(&self, y: &Vector3<f64>) -> Matrix3<f64> {
        let r2 = y.norm_squared();
        let r = r2.sqrt();
        let (c, _, _) = smoothstep((r - self.inner) / (self.outer - self.inner));
        if c == 0.0 {
            return Matrix3::zeros();
        }
        let rb = r.powi(-(self.n as i32 + 1));
        Matrix3::identity() * (self.epsilon * c * rb * (1.5 * y[2] * y[2] / r2 - 0.5))
    }

    fn radial_breakpoints(&self) -> Vec<f64> {
        vec![self.inner, self.outer]
    }
}
