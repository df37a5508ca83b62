use super::{boundary_loops, Mesh};
use crate::error::Result;
use crate::Vec3;

/// A mesh whose holes were closed, with flags marking the added vertices.
#[derive(Debug, Clone)]
pub struct FilledMesh {
    pub mesh: Mesh,
    /// One flag per vertex of `mesh`; true for vertices added by filling.
    pub filled_flags: Vec<bool>,
}

/// Closes every boundary loop with a triangle fan around a new vertex at the
/// loop centroid. New vertices are appended after the original ones.
pub fn fill_holes(mesh: &Mesh) -> Result<FilledMesh> {
    let loops = boundary_loops(mesh)?;
    let mut vertices = mesh.vertices().to_vec();
    let mut faces = mesh.faces().to_vec();
    let mut filled_flags = vec![false; vertices.len()];
    for lp in &loops {
        let centroid = lp
            .iter()
            .fold(Vec3::zeros(), |acc, &v| acc + mesh.vertices()[v])
            / lp.len() as f64;
        let c = vertices.len();
        vertices.push(centroid);
        filled_flags.push(true);
        // Boundary edge a->b belongs to an existing face; the fan face
        // traverses it as b->a to keep orientation consistent.
        for k in 0..lp.len() {
            let (a, b) = (lp[k], lp[(k + 1) % lp.len()]);
            faces.push([b, a, c]);
        }
    }
    Ok(FilledMesh {
        mesh: Mesh::new(vertices, faces)?,
        filled_flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures;
    use crate::sphere_geom::make_icosphere;

    #[test]
    fn closed_mesh_unchanged() {
        let m = make_icosphere(1).unwrap();
        let f = fill_holes(&m).unwrap();
        assert_eq!(f.mesh, m);
        assert!(f.filled_flags.iter().all(|&x| !x));
    }

    #[test]
    fn icosahedron_minus_face() {
        let ico = make_icosphere(0).unwrap();
        let m = Mesh::new(ico.vertices().to_vec(), ico.faces()[1..].to_vec()).unwrap();
        let f = fill_holes(&m).unwrap();
        assert_eq!(f.mesh.vertex_count(), 13);
        assert_eq!(f.mesh.face_count(), 19 + 3);
        assert!(boundary_loops(&f.mesh).unwrap().is_empty());
        assert!(f.mesh.is_consistently_oriented());
        assert_eq!(f.filled_flags.iter().filter(|&&x| x).count(), 1);
    }

    #[test]
    fn open_cylinder_two_loops() {
        let m = fixtures::open_cylinder(8, 3);
        let f = fill_holes(&m).unwrap();
        assert_eq!(f.mesh.vertex_count(), m.vertex_count() + 2);
        assert_eq!(f.mesh.face_count(), m.face_count() + 16);
        // Euler count oracle: V - E + F computed from scratch on the result.
        assert_eq!(f.mesh.euler_characteristic(), 2);
        assert!(f.mesh.is_consistently_oriented());
    }
}
