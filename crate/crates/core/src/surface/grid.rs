//! Gauss–Legendre × equispaced grid on S² with a real spherical-harmonic transform.
//!
//! Nodes are stored ring by ring: colatitude `θ_j` (ascending, Gauss–Legendre in
//! `cos θ`) outer, longitude `φ_k = 2πk / N_φ` inner. Harmonics are the real,
//! orthonormal ones: `Y_l0 = P̄_l0`, `Y_lm = √2 P̄_lm cos mφ` and
//! `Y_l,−m = √2 P̄_lm sin mφ` for `m > 0`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, pairwise_sum};

#[inline]
fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Spectral coefficients, triangular storage indexed by `(l, m)` with `m ≤ l`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphCoeffs {
    l_max: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl SphCoeffs {
    pub fn zeros(l_max: usize) -> Self {
        let len = tri(l_max, l_max) + 1;
        Self {
            l_max,
            cos: vec![0.0; len],
            sin: vec![0.0; len],
        }
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Coefficient of the real harmonic `(l, m_idx)`; negative `m_idx` selects the sine part.
    pub fn get(&self, l: usize, m_idx: i32) -> f64 {
        let m = m_idx.unsigned_abs() as usize;
        if l > self.l_max || m > l {
            return 0.0;
        }
        if m_idx >= 0 {
            self.cos[tri(l, m)]
        } else {
            self.sin[tri(l, m)]
        }
    }

    pub fn set(&mut self, l: usize, m_idx: i32, value: f64) {
        let m = m_idx.unsigned_abs() as usize;
        assert!(l <= self.l_max && m <= l, "harmonic ({l}, {m_idx}) out of range");
        if m_idx >= 0 {
            self.cos[tri(l, m)] = value;
        } else {
            self.sin[tri(l, m)] = value;
        }
    }

    /// Zero every coefficient above degree `l_keep`.
    pub fn truncate(&mut self, l_keep: usize) {
        for l in (l_keep + 1)..=self.l_max {
            for m in 0..=l {
                self.cos[tri(l, m)] = 0.0;
                self.sin[tri(l, m)] = 0.0;
            }
        }
    }

    /// `Σ_m (a_lm)²` for each degree.
    pub fn degree_power(&self) -> Vec<f64> {
        (0..=self.l_max)
            .map(|l| (0..=l).map(|m| self.cos[tri(l, m)].powi(2) + self.sin[tri(l, m)].powi(2)).sum())
            .collect()
    }
}

/// Field values and derivatives on the grid. The φ-derivatives carry the
/// pole-regular `1/sin θ` factors so every entry is bounded.
#[derive(Clone, Debug)]
pub struct FieldDerivatives {
    pub value: Vec<f64>,
    pub d_theta: Vec<f64>,
    /// `∂_φ f / sin θ`
    pub d_phi: Vec<f64>,
    pub d_theta_theta: Vec<f64>,
    /// `∂_θ ∂_φ f / sin θ`
    pub d_theta_phi: Vec<f64>,
    /// `∂_φ² f / sin² θ`
    pub d_phi_phi: Vec<f64>,
}

struct Ring {
    p: Vec<f64>,
    dp: Vec<f64>,
}

pub struct SphericalGrid {
    l_max: usize,
    n_theta: usize,
    n_phi: usize,
    theta: Vec<f64>,
    cos_theta: Vec<f64>,
    sin_theta: Vec<f64>,
    gl_weights: Vec<f64>,
    phi: Vec<f64>,
    weights: Vec<f64>,
    rings: Vec<Ring>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SphericalGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphericalGrid")
            .field("l_max", &self.l_max)
            .field("n_theta", &self.n_theta)
            .field("n_phi", &self.n_phi)
            .finish()
    }
}

/// Normalized associated Legendre functions `P̄_lm(cos θ)` and `dP̄_lm/dθ` for `l ≤ l_max`.
fn legendre_ring(l_max: usize, x: f64, s: f64) -> Ring {
    let len = tri(l_max, l_max) + 1;
    let mut p = vec![0.0; len];
    let mut dp = vec![0.0; len];
    let mut pmm = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=l_max {
        if m > 0 {
            let mf = m as f64;
            pmm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
        }
        p[tri(m, m)] = pmm;
        if m < l_max {
            p[tri(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * pmm;
        }
        for l in (m + 2)..=l_max {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            p[tri(l, m)] = a * (x * p[tri(l - 1, m)] - b * p[tri(l - 2, m)]);
        }
    }
    // sin θ dP̄_lm/dθ = l x P̄_lm − sqrt((2l+1)/(2l−1) (l² − m²)) P̄_{l−1,m}
    for l in 0..=l_max {
        for m in 0..=l {
            let lf = l as f64;
            let mf = m as f64;
            let lower = if l > m {
                ((2.0 * lf + 1.0) / (2.0 * lf - 1.0) * (lf * lf - mf * mf)).sqrt() * p[tri(l - 1, m)]
            } else {
                0.0
            };
            dp[tri(l, m)] = (lf * x * p[tri(l, m)] - lower) / s;
        }
    }
    Ring { p, dp }
}

impl SphericalGrid {
    /// Grid with band limit `l_max`: `l_max + 1` colatitudes × `2 l_max + 2` longitudes.
    pub fn new(l_max: usize) -> Result<Arc<Self>> {
        if l_max < 1 {
            return Err(Error::Domain("band limit must be at least 1".into()));
        }
        let n_theta = l_max + 1;
        let n_phi = 2 * l_max + 2;
        let (x, w) = gauss_legendre(n_theta);
        let theta: Vec<f64> = x.iter().map(|v| v.acos()).collect();
        let sin_theta: Vec<f64> = x.iter().map(|v| (1.0 - v * v).sqrt()).collect();
        let phi: Vec<f64> = (0..n_phi).map(|k| 2.0 * PI * k as f64 / n_phi as f64).collect();
        let dphi = 2.0 * PI / n_phi as f64;
        let weights = w
            .iter()
            .flat_map(|wj| std::iter::repeat(wj * dphi).take(n_phi))
            .collect();
        let rings = x
            .iter()
            .zip(&sin_theta)
            .map(|(&xj, &sj)| legendre_ring(l_max, xj, sj))
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n_phi);
        let inverse = planner.plan_fft_inverse(n_phi);
        Ok(Arc::new(Self {
            l_max,
            n_theta,
            n_phi,
            theta,
            cos_theta: x,
            sin_theta,
            gl_weights: w,
            phi,
            weights,
            rings,
            forward,
            inverse,
        }))
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn cos_theta(&self) -> &[f64] {
        &self.cos_theta
    }

    pub fn sin_theta(&self) -> &[f64] {
        &self.sin_theta
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn gauss_weights(&self) -> &[f64] {
        &self.gl_weights
    }

    /// Quadrature weight of every node (area of S² they represent).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(ring, column)` of a flat node index.
    #[inline]
    pub fn ring_column(&self, node: usize) -> (usize, usize) {
        (node / self.n_phi, node % self.n_phi)
    }

    pub fn node_index(&self, node: usize) -> crate::NodeIndex {
        let (ring, column) = self.ring_column(node);
        crate::NodeIndex {
            ring,
            column,
            theta: self.theta[ring],
            phi: self.phi[column],
        }
    }

    /// Quadrature of a node field over S².
    pub fn integrate(&self, values: &[f64]) -> f64 {
        crate::numerics::weighted_sum(&self.weights, values)
    }

    /// Largest degree kept by the 2/3 dealiasing rule.
    pub fn dealias_degree(&self) -> usize {
        2 * self.l_max / 3
    }

    /// Forward transform; exact for fields of degree ≤ `l_max`.
    pub fn analyze(&self, values: &[f64]) -> SphCoeffs {
        assert_eq!(values.len(), self.len());
        let mut out = SphCoeffs::zeros(self.l_max);
        let dphi = 2.0 * PI / self.n_phi as f64;
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_phi];
        // per (l, m) contributions collected ring by ring, then summed pairwise
        let len = tri(self.l_max, self.l_max) + 1;
        let nt = self.n_theta;
        let mut cos_terms = vec![0.0; len * nt];
        let mut sin_terms = vec![0.0; len * nt];
        for j in 0..self.n_theta {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(values[j * self.n_phi + k], 0.0);
            }
            self.forward.process(&mut buf);
            let w = self.gl_weights[j] * dphi;
            let ring = &self.rings[j];
            for m in 0..=self.l_max {
                let norm = if m == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
                let c = buf[m].re * w * norm;
                let s = -buf[m].im * w * norm;
                for l in m..=self.l_max {
                    let pl = ring.p[tri(l, m)];
                    cos_terms[tri(l, m) * nt + j] = pl * c;
                    sin_terms[tri(l, m) * nt + j] = pl * s;
                }
            }
        }
        for idx in 0..len {
            out.cos[idx] = pairwise_sum(&cos_terms[idx * nt..(idx + 1) * nt]);
            out.sin[idx] = pairwise_sum(&sin_terms[idx * nt..(idx + 1) * nt]);
        }
        for l in 0..=self.l_max {
            out.sin[tri(l, 0)] = 0.0;
        }
        out
    }

    /// Sum ring Fourier series `Σ_m c_m cos mφ + s_m sin mφ` into `dst`.
    fn ring_synthesis(&self, cs: &[(f64, f64)], dst: &mut [f64]) {
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_phi];
        for (m, (c, s)) in cs.iter().enumerate() {
            buf[m] = Complex::new(*c, -*s);
        }
        self.inverse.process(&mut buf);
        for (d, b) in dst.iter_mut().zip(&buf) {
            *d = b.re;
        }
    }

    pub fn synthesize(&self, coeffs: &SphCoeffs) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let l_top = coeffs.l_max.min(self.l_max);
        let mut cs = vec![(0.0, 0.0); self.l_max + 1];
        for j in 0..self.n_theta {
            let ring = &self.rings[j];
            for (m, slot) in cs.iter_mut().enumerate() {
                let norm = if m == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
                let (mut c, mut s) = (0.0, 0.0);
                for l in m..=l_top {
                    let pl = ring.p[tri(l, m)];
                    c += coeffs.cos[tri(l, m)] * pl;
                    s += coeffs.sin[tri(l, m)] * pl;
                }
                *slot = (c * norm, s * norm);
            }
            self.ring_synthesis(&cs, &mut out[j * self.n_phi..(j + 1) * self.n_phi]);
        }
        out
    }

    /// Values and first/second derivatives of a band-limited field.
    pub fn derivatives(&self, coeffs: &SphCoeffs) -> FieldDerivatives {
        let n = self.len();
        let mut fd = FieldDerivatives {
            value: vec![0.0; n],
            d_theta: vec![0.0; n],
            d_phi: vec![0.0; n],
            d_theta_theta: vec![0.0; n],
            d_theta_phi: vec![0.0; n],
            d_phi_phi: vec![0.0; n],
        };
        let l_top = coeffs.l_max.min(self.l_max);
        let nm = self.l_max + 1;
        let mut p_cs = vec![(0.0, 0.0); nm];
        let mut dp_cs = vec![(0.0, 0.0); nm];
        let mut ddp_cs = vec![(0.0, 0.0); nm];
        let mut tmp = vec![(0.0, 0.0); nm];
        for j in 0..self.n_theta {
            let ring = &self.rings[j];
            let s = self.sin_theta[j];
            let cot = self.cos_theta[j] / s;
            for m in 0..nm {
                let norm = if m == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
                let mf = m as f64;
                let (mut c0, mut s0, mut c1, mut s1, mut c2, mut s2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for l in m..=l_top {
                    let idx = tri(l, m);
                    let (a, b) = (coeffs.cos[idx], coeffs.sin[idx]);
                    let p = ring.p[idx];
                    let dp = ring.dp[idx];
                    let lf = l as f64;
                    // Legendre ODE: P'' = −cot θ P' − (l(l+1) − m²/sin²θ) P
                    let ddp = -cot * dp - (lf * (lf + 1.0) - mf * mf / (s * s)) * p;
                    c0 += a * p;
                    s0 += b * p;
                    c1 += a * dp;
                    s1 += b * dp;
                    c2 += a * ddp;
                    s2 += b * ddp;
                }
                p_cs[m] = (c0 * norm, s0 * norm);
                dp_cs[m] = (c1 * norm, s1 * norm);
                ddp_cs[m] = (c2 * norm, s2 * norm);
            }
            let range = j * self.n_phi..(j + 1) * self.n_phi;
            self.ring_synthesis(&p_cs, &mut fd.value[range.clone()]);
            self.ring_synthesis(&dp_cs, &mut fd.d_theta[range.clone()]);
            self.ring_synthesis(&ddp_cs, &mut fd.d_theta_theta[range.clone()]);
            // ∂_φ (c cos mφ + s sin mφ) = m s cos mφ − m c sin mφ
            for (m, t) in tmp.iter_mut().enumerate() {
                let mf = m as f64;
                *t = (mf * p_cs[m].1 / s, -mf * p_cs[m].0 / s);
            }
            self.ring_synthesis(&tmp, &mut fd.d_phi[range.clone()]);
            for (m, t) in tmp.iter_mut().enumerate() {
                let mf = m as f64;
                *t = (mf * dp_cs[m].1 / s, -mf * dp_cs[m].0 / s);
            }
            self.ring_synthesis(&tmp, &mut fd.d_theta_phi[range.clone()]);
            for (m, t) in tmp.iter_mut().enumerate() {
                let k = -((m * m) as f64) / (s * s);
                *t = (k * p_cs[m].0, k * p_cs[m].1);
            }
            self.ring_synthesis(&tmp, &mut fd.d_phi_phi[range]);
        }
        fd
    }

    /// Value of the orthonormal real harmonic `(l, m_idx)` at every node,
    /// with its gradient components `(∂_θ Y, ∂_φ Y / sin θ)`.
    pub fn harmonic(&self, l: usize, m_idx: i32) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let m = m_idx.unsigned_abs() as usize;
        assert!(l <= self.l_max && m <= l, "harmonic ({l}, {m_idx}) out of range");
        let norm = if m == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
        let n = self.len();
        let (mut y, mut yt, mut yp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mf = m as f64;
        for j in 0..self.n_theta {
            let p = self.rings[j].p[tri(l, m)] * norm;
            let dp = self.rings[j].dp[tri(l, m)] * norm;
            let s = self.sin_theta[j];
            for k in 0..self.n_phi {
                let ang = mf * self.phi[k];
                let (trig, dtrig) = if m_idx >= 0 {
                    (ang.cos(), -mf * ang.sin())
                } else {
                    (ang.sin(), mf * ang.cos())
                };
                let idx = j * self.n_phi + k;
                y[idx] = p * trig;
                yt[idx] = dp * trig;
                yp[idx] = p * dtrig / s;
            }
        }
        (y, yt, yp)
    }
}

/// `max |Y_{l,m_idx}|` over the sphere for the orthonormal real harmonic.
pub fn harmonic_max_abs(l: usize, m_idx: i32) -> f64 {
    let m = m_idx.unsigned_abs() as usize;
    let norm = if m == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
    let eval = |theta: f64| {
        let ring = legendre_ring(l, theta.cos(), theta.sin());
        ring.p[tri(l, m)].abs() * norm
    };
    let samples = 2000 + 40 * l;
    let h = PI / samples as f64;
    let mut best = (0.0_f64, 0.0_f64);
    for i in 0..=samples {
        let th = i as f64 * h;
        let v = eval(th);
        if v > best.1 {
            best = (th, v);
        }
    }
    // golden-section refinement around the sampled maximum
    let (mut a, mut b) = ((best.0 - h).max(0.0), (best.0 + h).min(PI));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..80 {
        if eval(c) > eval(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    eval(0.5 * (a + b)).max(best.1)
}

/// Max-normalized real harmonic `Y / max|Y|` at every node.
pub fn unit_harmonic(grid: &SphericalGrid, l: usize, m_idx: i32) -> Vec<f64> {
    let (y, _, _) = grid.harmonic(l, m_idx);
    let scale = harmonic_max_abs(l, m_idx);
    y.into_iter().map(|v| v / scale).collect()
}
