//! Extrinsic geometry of a radial graph.
//!
//! Tangent frame per node: `e_θ = ∂_θ y` and `e_φ = ∂_φ y / sin θ`, the second
//! scaled so that nothing degenerates near the poles. All 2×2 tensors
//! (`g`, `A`) are expressed in this frame. With outward `ν`,
//! `A(X, Y) = −ḡ(ν, ∇̄_X Y)`, which makes coordinate spheres positively curved.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector3};

use super::graph::RadialGraph;
use super::grid::{SphCoeffs, SphericalGrid};
use crate::error::{Error, Result};
use crate::numerics::{eigenvalues_2x2, pairwise_sum};

/// Default lower bound on the graph factor `χ = ḡ(ω, ν)`.
pub const DEFAULT_GRAPH_EPS: f64 = 1e-3;

#[derive(Clone, Copy, Debug)]
pub struct GeometryOptions {
    pub graph_eps: f64,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self {
            graph_eps: DEFAULT_GRAPH_EPS,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NodeGeometry {
    pub point: Vector3<f64>,
    /// `[e_θ, e_φ]`
    pub tangent: [Vector3<f64>; 2],
    pub metric: Matrix2<f64>,
    pub metric_inv: Matrix2<f64>,
    /// Contravariant components of the ḡ-unit outward normal.
    pub normal: Vector3<f64>,
    pub chi: f64,
    pub second_form: Matrix2<f64>,
    pub mean_curvature: f64,
    /// `κ₁ ≤ κ₂`
    pub principal: [f64; 2],
    pub a_norm2: f64,
    /// `|Å|²`
    pub ring_norm2: f64,
    /// `dμ`: `√det g` times the node quadrature weight.
    pub area_element: f64,
}

#[derive(Clone, Debug)]
pub struct GeometryFields {
    grid: Arc<SphericalGrid>,
    nodes: Vec<NodeGeometry>,
    rho_coeffs: SphCoeffs,
    graph_eps: f64,
}

impl GeometryFields {
    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn nodes(&self) -> &[NodeGeometry] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn graph_eps(&self) -> f64 {
        self.graph_eps
    }

    /// Spectral coefficients of ρ the fields were computed from.
    pub fn rho_coeffs(&self) -> &SphCoeffs {
        &self.rho_coeffs
    }

    pub fn mean_curvature(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.mean_curvature).collect()
    }

    pub fn chi(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.chi).collect()
    }

    pub fn area_elements(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.area_element).collect()
    }

    /// `∫ f dμ` by the grid quadrature.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().zip(f).map(|(n, v)| n.area_element * v).collect();
        pairwise_sum(&terms)
    }

    pub fn area(&self) -> f64 {
        pairwise_sum(&self.area_elements())
    }

    pub fn min_chi(&self) -> f64 {
        self.nodes.iter().map(|n| n.chi).fold(f64::INFINITY, f64::min)
    }

    pub fn max_ring(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.ring_norm2.max(0.0).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn kappa_range(&self) -> (f64, f64) {
        self.nodes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), n| {
            (lo.min(n.principal[0]), hi.max(n.principal[1]))
        })
    }

    /// Sup over nodes of `|∇H|_g`, with `∇H` computed spectrally.
    pub fn max_grad_h(&self) -> f64 {
        let h = self.mean_curvature();
        let d = self.grid.derivatives(&self.grid.analyze(&h));
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let v = [d.d_theta[i], d.d_phi[i]];
                let gi = &n.metric_inv;
                (gi[(0, 0)] * v[0] * v[0] + 2.0 * gi[(0, 1)] * v[0] * v[1] + gi[(1, 1)] * v[1] * v[1])
                    .max(0.0)
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

pub fn geometry(graph: &RadialGraph) -> Result<GeometryFields> {
    geometry_with(graph, &GeometryOptions::default())
}

pub fn geometry_with(graph: &RadialGraph, options: &GeometryOptions) -> Result<GeometryFields> {
    let grid = graph.grid().clone();
    let metric = graph.metric();
    let coeffs = grid.analyze(graph.rho());
    let d = grid.derivatives(&coeffs);
    let rho = graph.rho();
    let n_phi = grid.n_phi();

    let mut nodes = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let j = node / n_phi;
        let k = node % n_phi;
        let (st, ct) = (grid.sin_theta()[j], grid.cos_theta()[j]);
        let (sp, cp) = grid.phi()[k].sin_cos();
        let omega = Vector3::new(st * cp, st * sp, ct);
        let omega_t = Vector3::new(ct * cp, ct * sp, -st);
        let omega_p = Vector3::new(-sp, cp, 0.0);
        let radial_xy = Vector3::new(cp, sp, 0.0);

        // use the exact nodal radius; derivatives come from the transform
        let r = rho[node];
        let (rt, rp) = (d.d_theta[node], d.d_phi[node]);
        let (rtt, rtp, rpp) = (d.d_theta_theta[node], d.d_theta_phi[node], d.d_phi_phi[node]);

        let y = omega * r;
        let e1 = omega * rt + omega_t * r;
        let e2 = omega * rp + omega_p * r;
        let d11 = omega * (rtt - r) + omega_t * (2.0 * rt);
        let d12 = omega * rtp + omega_t * rp + omega_p * (rt + r * ct / st);
        let d22 = omega * rpp + omega_p * (2.0 * rp) - radial_xy * (r / st);

        let frame = metric.frame3(&y)?;
        let ge1 = frame.g * e1;
        let ge2 = frame.g * e2;
        let g = Matrix2::new(e1.dot(&ge1), e1.dot(&ge2), e1.dot(&ge2), e2.dot(&ge2));
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
        let g_inv = Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]) / det;

        // the Euclidean cross product annihilates the tangent plane; raise with ḡ⁻¹
        let n_cov = e1.cross(&e2);
        let raised = frame.g_inv * n_cov;
        let norm = n_cov.dot(&raised).sqrt();
        let normal = raised / norm;
        let chi = omega.dot(&n_cov) / norm;

        let a = |dij: &Vector3<f64>, u: &Vector3<f64>, v: &Vector3<f64>| -> f64 {
            -(n_cov.dot(&(dij + frame.contract(u, v)))) / norm
        };
        let a11 = a(&d11, &e1, &e1);
        let a12 = a(&d12, &e1, &e2);
        let a22 = a(&d22, &e2, &e2);
        let second_form = Matrix2::new(a11, a12, a12, a22);
        let shape = g_inv * second_form;
        let mean_curvature = shape.trace();
        let principal = eigenvalues_2x2(shape[(0, 0)], shape[(0, 1)], shape[(1, 0)], shape[(1, 1)]);
        let a_norm2 = (shape * shape).trace();
        let traceless = g_inv * (second_form - g * (0.5 * mean_curvature));
        let ring_norm2 = (traceless * traceless).trace();

        nodes.push(NodeGeometry {
            point: y,
            tangent: [e1, e2],
            metric: g,
            metric_inv: g_inv,
            normal,
            chi,
            second_form,
            mean_curvature,
            principal,
            a_norm2,
            ring_norm2,
            area_element: det.sqrt() * grid.weights()[node],
        });
    }

    if let Some(bad) = nodes.iter().position(|n| {
        !(n.mean_curvature.is_finite() && n.area_element.is_finite() && n.chi.is_finite())
    }) {
        return Err(Error::Numerical(format!(
            "non-finite geometry at {}",
            grid.node_index(bad)
        )));
    }
    let (worst, min_chi) = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (i, n.chi))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid is never empty");
    if !(min_chi > options.graph_eps) {
        return Err(Error::GraphCondition {
            node: grid.node_index(worst),
            chi: min_chi,
            threshold: options.graph_eps,
        });
    }

    Ok(GeometryFields {
        grid,
        nodes,
        rho_coeffs: coeffs,
        graph_eps: options.graph_eps,
    })
}
