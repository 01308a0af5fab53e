//! Area, enclosed volume and the coordinate-sphere reference values.

use std::f64::consts::PI;

use nalgebra::Vector3;

use super::geometry::{geometry_with, GeometryOptions};
use super::graph::{make_sphere, RadialGraph};
use super::grid::SphericalGrid;
use crate::ambient::AmbientMetric;
use crate::error::{Error, Result};
use crate::numerics::{pairwise_sum, AdaptiveQuadrature};

/// Relative tolerance of the radial volume quadrature.
pub const VOLUME_REL_TOL: f64 = 1e-10;
/// Band limit of the auxiliary grid used for sphere values in perturbed metrics.
pub const REFERENCE_BAND_LIMIT: usize = 16;
/// Default finite-difference step of [`variation_check`].
pub const VARIATION_STEP: f64 = 1e-5;

fn no_graph_check() -> GeometryOptions {
    GeometryOptions {
        graph_eps: f64::NEG_INFINITY,
    }
}

pub fn area(graph: &RadialGraph) -> Result<f64> {
    Ok(geometry_with(graph, &no_graph_check())?.area())
}

/// `∫_{r_h}^{ρ} √det ḡ(sω) s² ds` along one ray.
fn ray_volume(metric: &AmbientMetric, quad: &AdaptiveQuadrature, omega: &Vector3<f64>, rho: f64) -> f64 {
    let rh = metric.horizon_radius();
    let breaks = metric.radial_breakpoints();
    quad.integrate_with_breaks(|s| metric.volume_density3(&(omega * s)) * s * s, rh, rho, &breaks)
}

/// Volume of the region between the horizon (or the origin) and the graph.
pub fn enclosed_volume(graph: &RadialGraph) -> Result<f64> {
    let metric = graph.metric();
    let grid = graph.grid();
    let rh = metric.horizon_radius();
    if !(graph.min_rho() > rh) {
        return Err(Error::Domain(format!(
            "graph reaches the horizon (min rho {} <= {rh})",
            graph.min_rho()
        )));
    }
    let quad = AdaptiveQuadrature::new(16, VOLUME_REL_TOL);
    let n_phi = grid.n_phi();
    let terms: Vec<f64> = graph
        .rho()
        .iter()
        .enumerate()
        .map(|(node, &rho)| {
            let (j, k) = (node / n_phi, node % n_phi);
            let st = grid.sin_theta()[j];
            let (sp, cp) = grid.phi()[k].sin_cos();
            let omega = Vector3::new(st * cp, st * sp, grid.cos_theta()[j]);
            grid.weights()[node] * ray_volume(metric, &quad, &omega, rho)
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

/// `A^{n+1} / V^n` with n = 2.
pub fn isoperimetric_ratio(graph: &RadialGraph) -> Result<f64> {
    let v = enclosed_volume(graph)?;
    if !(v > 0.0) {
        return Err(Error::Domain(format!("enclosed volume {v} is not positive")));
    }
    let a = area(graph)?;
    Ok(a.powi(3) / (v * v))
}

fn check_sphere_radius(metric: &AmbientMetric, r: f64) -> Result<()> {
    if metric.n() != 2 {
        return Err(Error::Domain(format!(
            "sphere values are implemented for n = 2, metric has n = {}",
            metric.n()
        )));
    }
    let rh = metric.horizon_radius();
    if !(r.is_finite() && r > rh) {
        return Err(Error::Domain(format!("radius {r} is not above the horizon radius {rh}")));
    }
    Ok(())
}

fn reference_sphere(metric: &AmbientMetric, r: f64) -> Result<RadialGraph> {
    make_sphere(SphericalGrid::new(REFERENCE_BAND_LIMIT)?, metric.clone(), r)
}

/// Area of the coordinate sphere of radius `r`.
pub fn sphere_area(metric: &AmbientMetric, r: f64) -> Result<f64> {
    check_sphere_radius(metric, r)?;
    if metric.is_perturbed() {
        return area(&reference_sphere(metric, r)?);
    }
    let (phi, _) = metric.radial_conformal_factor(r);
    Ok(4.0 * PI * r * r * phi.powi(4))
}

/// Volume enclosed by the coordinate sphere of radius `r`.
pub fn sphere_volume(metric: &AmbientMetric, r: f64) -> Result<f64> {
    check_sphere_radius(metric, r)?;
    if metric.is_perturbed() {
        return enclosed_volume(&reference_sphere(metric, r)?);
    }
    let quad = AdaptiveQuadrature::new(16, VOLUME_REL_TOL);
    let rh = metric.horizon_radius();
    let density = |s: f64| {
        let (phi, _) = metric.radial_conformal_factor(s);
        phi.powi(6) * s * s
    };
    Ok(4.0 * PI * quad.integrate(density, rh, r))
}

/// `d/dr` of the sphere volume: `∫ √det ḡ(rω) r² dω`.
fn sphere_volume_rate(metric: &AmbientMetric, r: f64) -> Result<f64> {
    if !metric.is_perturbed() {
        let (phi, _) = metric.radial_conformal_factor(r);
        return Ok(4.0 * PI * phi.powi(6) * r * r);
    }
    let grid = SphericalGrid::new(REFERENCE_BAND_LIMIT)?;
    let n_phi = grid.n_phi();
    let vals: Vec<f64> = (0..grid.len())
        .map(|node| {
            let (j, k) = (node / n_phi, node % n_phi);
            let st = grid.sin_theta()[j];
            let (sp, cp) = grid.phi()[k].sin_cos();
            let y = Vector3::new(st * cp, st * sp, grid.cos_theta()[j]) * r;
            metric.volume_density3(&y) * r * r
        })
        .collect();
    Ok(grid.integrate(&vals))
}

/// `d/dr` of the sphere area: `∫ H χ dμ`.
fn sphere_area_rate(metric: &AmbientMetric, r: f64) -> Result<f64> {
    if !metric.is_perturbed() {
        let (phi, dphi) = metric.radial_conformal_factor(r);
        return Ok(4.0 * PI * (2.0 * r * phi.powi(4) + 4.0 * r * r * phi.powi(3) * dphi));
    }
    let f = geometry_with(&reference_sphere(metric, r)?, &no_graph_check())?;
    let hx: Vec<f64> = f.nodes().iter().map(|n| n.mean_curvature * n.chi).collect();
    Ok(f.integrate(&hx))
}

/// Safeguarded Newton on an increasing function of `r > r_h`.
fn invert_monotone(
    metric: &AmbientMetric,
    target: f64,
    what: &str,
    value: impl Fn(f64) -> Result<f64>,
    rate: impl Fn(f64) -> Result<f64>,
) -> Result<f64> {
    let rh = metric.horizon_radius();
    let floor = if what == "area" && rh > 0.0 {
        // the horizon is a minimal surface of positive area
        let (phi, _) = metric.radial_conformal_factor(rh);
        4.0 * PI * rh * rh * phi.powi(4)
    } else {
        0.0
    };
    if !(target.is_finite() && target > floor) {
        return Err(Error::Domain(format!(
            "target {what} {target} does not exceed its horizon value {floor}"
        )));
    }
    let mut lo = rh;
    let mut hi = if rh > 0.0 { 2.0 * rh } else { 1.0 };
    while value(hi)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numerical(format!("cannot bracket {what} {target}")));
        }
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = value(r)? - target;
        if f > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let d = rate(r)?;
        let mut next = r - f / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - r).abs() <= 1e-12 * next || hi - lo <= 1e-14 * hi {
            return Ok(next);
        }
        r = next;
    }
    Ok(r)
}

/// Radius of the coordinate sphere enclosing volume `volume`.
pub fn sphere_of_volume(metric: &AmbientMetric, volume: f64) -> Result<f64> {
    check_sphere_radius(metric, metric.horizon_radius() + 1.0)?;
    invert_monotone(
        metric,
        volume,
        "volume",
        |r| sphere_volume(metric, r),
        |r| sphere_volume_rate(metric, r),
    )
}

/// Radius of the coordinate sphere of area `area`.
pub fn sphere_of_area(metric: &AmbientMetric, area: f64) -> Result<f64> {
    check_sphere_radius(metric, metric.horizon_radius() + 1.0)?;
    invert_monotone(
        metric,
        area,
        "area",
        |r| sphere_area(metric, r),
        |r| sphere_area_rate(metric, r),
    )
}

/// Compare the finite-difference derivative of the area under
/// `ρ → ρ + εψ` with `∫ H ψ χ dμ`. Returns `(lhs, rhs)`.
pub fn variation_check(graph: &RadialGraph, psi: &[f64], eps_fd: f64) -> Result<(f64, f64)> {
    if psi.len() != graph.rho().len() {
        return Err(Error::Domain(format!(
            "variation field has {} values, grid has {} nodes",
            psi.len(),
            graph.rho().len()
        )));
    }
    let shifted = |s: f64| -> Result<f64> {
        let rho = graph.rho().iter().zip(psi).map(|(r, p)| r + s * p).collect();
        area(&graph.with_rho(rho)?)
    };
    let lhs = (shifted(eps_fd)? - shifted(-eps_fd)?) / (2.0 * eps_fd);
    let f = geometry_with(graph, &no_graph_check())?;
    let integrand: Vec<f64> = f
        .nodes()
        .iter()
        .zip(psi)
        .map(|(n, p)| n.mean_curvature * p * n.chi)
        .collect();
    Ok((lhs, f.integrate(&integrand)))
}
