//! Bijective maps from closed genus-0 meshes onto the unit sphere.

mod coords;
mod embed;
pub mod solver;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use coords::{from_spherical_coords, to_spherical_coords, SphericalCoord};
pub use embed::mesh_fingerprint;

use crate::error::{Result, SisError};
use crate::mesh::{io::to_ply, load_mesh, Mesh};
use crate::Vec3;

/// Unit-sphere position for every vertex of a source mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalEmbedding {
    pub sphere_points: Vec<Vec3>,
    /// Fingerprint of the mesh the embedding was computed for.
    pub source_mesh_id: String,
}

impl SphericalEmbedding {
    pub fn len(&self) -> usize {
        self.sphere_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sphere_points.is_empty()
    }

    /// Spherical coordinates of every embedded vertex.
    pub fn coords(&self) -> Result<Vec<SphericalCoord>> {
        self.sphere_points.iter().map(to_spherical_coords).collect()
    }

    /// Checks that this embedding belongs to `mesh`.
    pub fn matches(&self, mesh: &Mesh) -> bool {
        self.sphere_points.len() == mesh.vertex_count()
            && self.source_mesh_id == mesh_fingerprint(mesh)
    }

    pub fn centroid_norm(&self) -> f64 {
        let n = self.sphere_points.len().max(1) as f64;
        (self.sphere_points.iter().fold(Vec3::zeros(), |a, p| a + p) / n).norm()
    }
}

/// Computes a bijective, orientation-preserving spherical embedding of a
/// closed, manifold, genus-0 mesh.
///
/// Fails with [`SisError::NotGenus0`] for other topologies and with
/// [`SisError::FlippedTriangles`] if the result is not bijective.
pub fn spherical_parameterize(mesh: &Mesh) -> Result<SphericalEmbedding> {
    embed::parameterize(mesh)
}

/// Number of faces whose embedded triangle is inverted or degenerate
/// (non-positive triple product of its corners).
pub fn check_orientation(embedding: &SphericalEmbedding, mesh: &Mesh) -> Result<usize> {
    if embedding.len() != mesh.vertex_count() {
        return Err(SisError::Dimension(format!(
            "embedding has {} points, mesh has {} vertices",
            embedding.len(),
            mesh.vertex_count()
        )));
    }
    Ok(embed::count_flipped(mesh.faces(), &embedding.sphere_points))
}

/// Per-face angle distortion of the map from mesh faces to their chord
/// triangles on the sphere.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistortionReport {
    pub per_face: Vec<f64>,
    pub mean: f64,
    pub max: f64,
}

fn local_frame(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<[[f64; 2]; 2]> {
    let e1 = b - a;
    let e2 = c - a;
    let l1 = e1.norm();
    let n = e1.cross(&e2);
    if l1 == 0.0 || n.norm() <= 1e-300 {
        return None;
    }
    let x = e1 / l1;
    let y = n.cross(&x).normalize();
    // Columns are the two edge vectors in the face's own orthonormal frame.
    Some([[l1, e2.dot(&x)], [0.0, e2.dot(&y)]])
}

/// Ratio of the singular values of a 2x2 matrix.
fn singular_ratio(m: [[f64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = m;
    let e = 0.5 * (a + d);
    let f = 0.5 * (a - d);
    let g = 0.5 * (c + b);
    let h = 0.5 * (c - b);
    let q = e.hypot(h);
    let r = f.hypot(g);
    let smin = (q - r).abs();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        (q + r) / smin
    }
}

/// Quasi-conformal distortion `sigma_max / sigma_min` per face. A conformal
/// face map scores 1.
pub fn quasi_conformal_distortion(
    mesh: &Mesh,
    embedding: &SphericalEmbedding,
) -> Result<DistortionReport> {
    if embedding.len() != mesh.vertex_count() {
        return Err(SisError::Dimension(
            "embedding/mesh vertex count mismatch".into(),
        ));
    }
    let v = mesh.vertices();
    let s = &embedding.sphere_points;
    let mut per_face = Vec::with_capacity(mesh.face_count());
    for (fi, f) in mesh.faces().iter().enumerate() {
        let src = local_frame(&v[f[0]], &v[f[1]], &v[f[2]])
            .ok_or_else(|| SisError::Degenerate(format!("face {fi} has zero area")))?;
        let Some(dst) = local_frame(&s[f[0]], &s[f[1]], &s[f[2]]) else {
            per_face.push(f64::INFINITY);
            continue;
        };
        // J = dst * src^-1; src is upper triangular.
        let [[s11, s12], [_, s22]] = src;
        let inv = [[1.0 / s11, -s12 / (s11 * s22)], [0.0, 1.0 / s22]];
        let mut j = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                j[r][c] = dst[r][0] * inv[0][c] + dst[r][1] * inv[1][c];
            }
        }
        per_face.push(singular_ratio(j));
    }
    let mean = per_face.iter().sum::<f64>() / per_face.len().max(1) as f64;
    let max = per_face.iter().copied().fold(0.0, f64::max);
    Ok(DistortionReport {
        per_face,
        mean,
        max,
    })
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    mesh: String,
    vertex_count: usize,
    centroid_norm: f64,
    max_distortion: f64,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the embedding as an ASCII PLY (unit points with the mesh faces)
/// plus a JSON sidecar next to it.
pub fn save_embedding(embedding: &SphericalEmbedding, mesh: &Mesh, path: &Path) -> Result<()> {
    if !embedding.matches(mesh) {
        return Err(SisError::Dimension(
            "embedding does not belong to mesh".into(),
        ));
    }
    fs::write(path, to_ply(&embedding.sphere_points, mesh.faces()))
        .map_err(|e| SisError::io(path, e))?;
    let side = Sidecar {
        mesh: embedding.source_mesh_id.clone(),
        vertex_count: embedding.len(),
        centroid_norm: embedding.centroid_norm(),
        max_distortion: quasi_conformal_distortion(mesh, embedding)?.max,
    };
    let sp = sidecar_path(path);
    fs::write(&sp, serde_json::to_string_pretty(&side)?).map_err(|e| SisError::io(&sp, e))?;
    Ok(())
}

/// Reads an embedding written by [`save_embedding`].
pub fn load_embedding(path: &Path) -> Result<SphericalEmbedding> {
    let m = load_mesh(path)?;
    let sp = sidecar_path(path);
    let side: Sidecar =
        serde_json::from_str(&fs::read_to_string(&sp).map_err(|e| SisError::io(&sp, e))?)?;
    if side.vertex_count != m.vertex_count() {
        return Err(SisError::Dimension(format!(
            "sidecar lists {} vertices, PLY has {}",
            side.vertex_count,
            m.vertex_count()
        )));
    }
    for p in m.vertices() {
        if (p.norm() - 1.0).abs() > 1e-6 {
            return Err(SisError::NotUnit(p.norm()));
        }
    }
    Ok(SphericalEmbedding {
        sphere_points: m.vertices().iter().map(|p| p / p.norm()).collect(),
        source_mesh_id: side.mesh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures;
    use crate::sphere_geom::make_icosphere;
    use nalgebra::Matrix3;

    /// Best rotation taking `a` onto `b` (Kabsch), via SVD.
    fn kabsch(a: &[Vec3], b: &[Vec3]) -> Matrix3<f64> {
        let mut h = Matrix3::zeros();
        for (p, q) in a.iter().zip(b) {
            h += p * q.transpose();
        }
        let svd = h.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut d = Matrix3::identity();
        d[(2, 2)] = (vt.transpose() * u.transpose()).determinant().signum();
        vt.transpose() * d * u.transpose()
    }

    #[test]
    fn tetrahedron_maps_to_rotated_regular_tetrahedron() {
        let t = fixtures::tetrahedron();
        let e = spherical_parameterize(&t).unwrap();
        assert_eq!(check_orientation(&e, &t).unwrap(), 0);
        let r = kabsch(t.vertices(), &e.sphere_points);
        let dev = t
            .vertices()
            .iter()
            .zip(&e.sphere_points)
            .map(|(p, q)| (r * p).angle(q))
            .fold(0.0, f64::max);
        assert!(dev < 1e-6, "angular deviation {dev}");
        assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn icosphere_distortion_matches_its_own() {
        let m = make_icosphere(4).unwrap();
        let e = spherical_parameterize(&m).unwrap();
        assert_eq!(check_orientation(&e, &m).unwrap(), 0);
        assert!(e.centroid_norm() < 1e-3);
        assert!(e
            .sphere_points
            .iter()
            .all(|p| (p.norm() - 1.0).abs() < 1e-12));
        assert!(e.matches(&m));
        let own = SphericalEmbedding {
            sphere_points: m.vertices().to_vec(),
            source_mesh_id: mesh_fingerprint(&m),
        };
        let d0 = quasi_conformal_distortion(&m, &own).unwrap();
        let d = quasi_conformal_distortion(&m, &e).unwrap();
        assert!(
            (d.mean - d0.mean).abs() < 1e-3,
            "mean {} vs {}",
            d.mean,
            d0.mean
        );
    }

    #[test]
    fn ellipsoid_embedding_is_bijective() {
        let m = make_icosphere(3).unwrap();
        let stretched: Vec<Vec3> = m
            .vertices()
            .iter()
            .map(|p| Vec3::new(2.0 * p.x, p.y, 0.5 * p.z))
            .collect();
        let m = m.with_vertices(stretched).unwrap();
        let e = spherical_parameterize(&m).unwrap();
        assert_eq!(check_orientation(&e, &m).unwrap(), 0);
    }

    #[test]
    fn torus_rejected() {
        assert!(matches!(
            spherical_parameterize(&fixtures::torus(8, 6)),
            Err(SisError::NotGenus0 { euler: 0 })
        ));
    }

    #[test]
    fn open_mesh_rejected() {
        assert!(spherical_parameterize(&fixtures::open_cylinder(8, 3)).is_err());
    }

    #[test]
    fn mirrored_embedding_flips_every_face() {
        let m = make_icosphere(2).unwrap();
        let mut e = spherical_parameterize(&m).unwrap();
        for p in &mut e.sphere_points {
            p.x = -p.x;
        }
        assert_eq!(check_orientation(&e, &m).unwrap(), m.face_count());
    }

    #[test]
    fn swapped_vertices_flip_faces() {
        let m = make_icosphere(2).unwrap();
        let mut e = spherical_parameterize(&m).unwrap();
        e.sphere_points.swap(0, 50);
        assert!(check_orientation(&e, &m).unwrap() >= 1);
    }

    #[test]
    fn distortion_of_identity_is_one() {
        let m = make_icosphere(2).unwrap();
        let e = SphericalEmbedding {
            sphere_points: m.vertices().to_vec(),
            source_mesh_id: mesh_fingerprint(&m),
        };
        let d = quasi_conformal_distortion(&m, &e).unwrap();
        assert!((d.max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distortion_of_axis_stretch() {
        // Unit right triangle stretched by 3 along x has ratio 3.
        let m = Mesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
            vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
        )
        .unwrap();
        let mut pts = m.vertices().to_vec();
        for p in &mut pts {
            p.x *= 3.0;
        }
        let e = SphericalEmbedding {
            sphere_points: pts,
            source_mesh_id: String::new(),
        };
        let d = quasi_conformal_distortion(&m, &e).unwrap();
        assert!((d.per_face[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_area_face_errors() {
        let m = Mesh::new(
            vec![
                Vec3::zeros(),
                Vec3::x(),
                Vec3::new(2.0, 0.0, 0.0),
                Vec3::z(),
            ],
            vec![[0, 1, 2], [0, 3, 1], [1, 3, 2], [0, 2, 3]],
        );
        // Either construction or parameterization must refuse the sliver.
        if let Ok(m) = m {
            assert!(spherical_parameterize(&m).is_err());
        }
    }

    #[test]
    fn save_load_round_trip() {
        let m = make_icosphere(1).unwrap();
        let e = spherical_parameterize(&m).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.ply");
        save_embedding(&e, &m, &p).unwrap();
        let back = load_embedding(&p).unwrap();
        assert_eq!(back.source_mesh_id, e.source_mesh_id);
        for (a, b) in back.sphere_points.iter().zip(&e.sphere_points) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}
