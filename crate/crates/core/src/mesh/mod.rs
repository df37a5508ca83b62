//! Triangle mesh data model, file I/O and topology queries.
//!
//! A [`Mesh`] is an indexed triangle list. Construction validates indices and
//! rejects degenerate faces; orientation and manifoldness are checked by the
//! topology operations that depend on them.

mod decompose;
mod holes;
pub mod io;
mod standardize;
mod topology;

use std::collections::HashSet;

use crate::error::{Result, SisError};
use crate::Vec3;

pub use decompose::{decompose_genus0, decompose_with_mask, SubmeshDecomposition, VertexMask};
pub use holes::{fill_holes, FilledMesh};
pub use io::{load_mesh, save_mesh};
pub use standardize::{fit_standardizer, Standardizer};
pub use topology::{
    boundary_loops, one_ring, split_connected_components, Component, NeighborStructure,
};

/// An indexed triangle mesh with counterclockwise faces.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl Mesh {
    /// Builds a mesh, checking that all face indices are in range and that no
    /// face repeats a vertex.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(SisError::InvalidMesh(format!(
                        "face {fi} index {v} out of range (vertex count {n})"
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(SisError::InvalidMesh(format!(
                    "face {fi} is degenerate: {f:?}"
                )));
            }
        }
        Ok(Mesh { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Same topology, new positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(SisError::Dimension(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(Mesh {
            vertices,
            faces: self.faces.clone(),
        })
    }

    /// Number of distinct undirected edges.
    pub fn edge_count(&self) -> usize {
        let mut edges = HashSet::with_capacity(self.faces.len() * 3 / 2 + 1);
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edge_count() as i64 + self.face_count() as i64
    }

    /// True when every directed edge appears at most once, i.e. neighbouring
    /// faces traverse their shared edge in opposite directions.
    pub fn is_consistently_oriented(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.faces.len() * 3);
        self.faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| (f[k], f[(k + 1) % 3])))
            .all(|e| seen.insert(e))
    }

    /// Length of the bounding-box diagonal.
    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.vertices)
    }
}

pub(crate) fn bbox_diagonal(points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_degenerate_faces() {
        let v = vec![Vec3::zeros(); 3];
        assert!(matches!(
            Mesh::new(v.clone(), vec![[0, 1, 3]]),
            Err(SisError::InvalidMesh(_))
        ));
        assert!(matches!(
            Mesh::new(v, vec![[0, 1, 1]]),
            Err(SisError::InvalidMesh(_))
        ));
    }

    #[test]
    fn tetrahedron_euler() {
        let t = fixtures::tetrahedron();
        assert_eq!(t.edge_count(), 6);
        assert_eq!(t.euler_characteristic(), 2);
        assert!(t.is_consistently_oriented());
    }

    #[test]
    fn torus_euler_is_zero() {
        assert_eq!(fixtures::torus(8, 6).euler_characteristic(), 0);
    }
}
