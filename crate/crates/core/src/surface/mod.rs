//! Radial graphs over a spectral spherical grid and their extrinsic geometry.

mod geometry;
mod graph;
mod grid;
mod measure;

pub use geometry::{geometry, geometry_with, GeometryFields, GeometryOptions, NodeGeometry, DEFAULT_GRAPH_EPS};
pub use graph::{format_sig17, make_sphere, perturb, read_snapshot, write_snapshot, RadialGraph};
pub use grid::{harmonic_max_abs, unit_harmonic, FieldDerivatives, SphCoeffs, SphericalGrid};
pub use measure::{
    area, enclosed_volume, isoperimetric_ratio, sphere_area, sphere_of_area, sphere_of_volume, sphere_volume,
    variation_check, REFERENCE_BAND_LIMIT, VARIATION_STEP, VOLUME_REL_TOL,
};
