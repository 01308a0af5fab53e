//! Small numerical kernels shared by the geometry, flow and spectrum code.

use std::f64::consts::PI;

/// Sum with a fixed binary-tree order so results do not depend on how the
/// terms were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Weighted pairwise sum `sum_k w_k f_k`.
pub fn weighted_sum(weights: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), values.len());
    let prod: Vec<f64> = weights.iter().zip(values).map(|(w, v)| w * v).collect();
    pairwise_sum(&prod)
}

/// Gauss–Legendre nodes and weights on [-1, 1], nodes in descending order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// Fixed-order Gauss–Legendre rule used as the panel rule of [`AdaptiveQuadrature`].
#[derive(Clone, Debug)]
pub struct AdaptiveQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    rel_tol: f64,
    max_depth: usize,
}

impl AdaptiveQuadrature {
    pub fn new(order: usize, rel_tol: f64) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self {
            nodes,
            weights,
            rel_tol,
            max_depth: 40,
        }
    }

    fn panel<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }

    /// Integrate `f` over `[a, b]`, bisecting panels until each one agrees with
    /// its two halves to the relative tolerance.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let whole = self.panel(&f, a, b);
        self.refine(&f, a, b, whole, 0)
    }

    fn refine<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64, whole: f64, depth: usize) -> f64 {
        let mid = 0.5 * (a + b);
        let left = self.panel(f, a, mid);
        let right = self.panel(f, mid, b);
        let split = left + right;
        if (split - whole).abs() <= self.rel_tol * split.abs().max(f64::MIN_POSITIVE)
            || depth >= self.max_depth
        {
            return split;
        }
        self.refine(f, a, mid, left, depth + 1) + self.refine(f, mid, b, right, depth + 1)
    }

    /// Integrate over `[a, b]` split at the given interior breakpoints.
    pub fn integrate_with_breaks<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64, breaks: &[f64]) -> f64 {
        let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&c| c > lo && c < hi).collect();
        cuts.sort_by(|x, y| x.total_cmp(y));
        let mut total = 0.0;
        let mut start = lo;
        for c in cuts.into_iter().chain(std::iter::once(hi)) {
            total += self.integrate(&f, start, c);
            start = c;
        }
        sign * total
    }
}

/// Eigenvalues (ascending) of a 2×2 matrix that is self-adjoint with respect
/// to some inner product, so its spectrum is real. A slightly negative
/// discriminant from rounding is clamped to zero.
pub fn eigenvalues_2x2(a11: f64, a12: f64, a21: f64, a22: f64) -> [f64; 2] {
    let half_trace = 0.5 * (a11 + a22);
    let half_diff = 0.5 * (a11 - a22);
    let disc = (half_diff * half_diff + a12 * a21).max(0.0).sqrt();
    [half_trace - disc, half_trace + disc]
}

/// Area of the unit n-sphere in R^{n+1}.
pub fn unit_sphere_area(n: usize) -> f64 {
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 1.0) * unit_sphere_area(n - 2),
    }
}

/// 4th-order central difference of a vector-valued function along one axis.
pub fn central_difference4<F>(f: F, h: f64) -> Vec<f64>
where
    F: Fn(f64) -> Vec<f64>,
{
    let m2 = f(-2.0 * h);
    let m1 = f(-h);
    let p1 = f(h);
    let p2 = f(2.0 * h);
    (0..m2.len())
        .map(|i| (m2[i] - 8.0 * m1[i] + 8.0 * p1[i] - p2[i]) / (12.0 * h))
        .collect()
}
