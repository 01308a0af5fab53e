//! Volume- and area-preserving mean curvature flow of radial graphs in
//! Schwarzschild and asymptotically Schwarzschild spaces.
//!
//! The crate is organised bottom-up:
//!
//! - [`ambient`]: the ambient metric, its Christoffel symbols and Ricci tensor;
//! - [`surface`]: spectral spherical grids, radial graphs and their extrinsic geometry;
//! - [`flow`]: the nonlocal flows, time stepping and run control;
//! - [`diagnostics`]: per-step functionals, monotonicity audits and rate fits;
//! - [`stability`]: the linearized flow operator on CMC spheres and its spectrum.

pub mod ambient;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod numerics;
pub mod stability;
pub mod surface;

pub use error::{Error, NodeIndex, Result};
