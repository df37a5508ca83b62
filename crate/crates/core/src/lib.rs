//! Spherical implicit surfaces for fixed-topology triangle meshes.
//!
//! Every mesh that shares a template topology is mapped onto the unit
//! sphere once; a neural decoder then predicts 3D positions from
//! spherical coordinates, optionally conditioned on a latent code.

pub mod error;
pub mod mesh;
pub mod models;
pub mod nn;
pub mod pipelines;
pub mod sphere_geom;
pub mod sphere_param;

pub use error::{Result, SisError};

/// Double-precision 3-vector used for all geometry.
pub type Vec3 = nalgebra::Vector3<f64>;
