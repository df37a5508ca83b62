//! Triangulations of unit points, point location with barycentric
//! coordinates, barycentric interpolation and icosphere generation.

mod hull;
mod icosphere;

use std::f64::consts::PI;

use crate::error::{Result, SisError};
use crate::mesh::Mesh;
use crate::sphere_param::to_spherical_coords;
use crate::Vec3;

pub use icosphere::{icosphere_vertex_count, make_icosphere, MAX_ICOSPHERE_LEVEL};

/// Relative tolerance on barycentric coordinates when testing containment.
const CONTAIN_EPS: f64 = 1e-12;
/// Weights this close to 1 are snapped to the corner.
const CORNER_SNAP: f64 = 1e-12;
/// Extra angular slack added to face cones when building the location grid.
const CONE_MARGIN: f64 = 1e-6;

/// Face index plus barycentric weights of a located direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycentricCoords {
    pub face_index: usize,
    pub lambdas: [f64; 3],
}

/// Grid over normalised spherical coordinates; each cell lists (in ascending
/// order) the faces whose bounding cone may reach it.
#[derive(Debug, Clone)]
struct LocationIndex {
    rows: usize,
    cols: usize,
    cells: Vec<Vec<u32>>,
}

/// Convex-hull triangulation of unit points with a point-location index.
#[derive(Debug, Clone)]
pub struct SphericalTriangulation {
    points: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    /// Row-major inverse of the matrix whose columns are the face corners.
    inverses: Vec<[[f64; 3]; 3]>,
    index: LocationIndex,
}

fn invert_columns(a: &Vec3, b: &Vec3, c: &Vec3) -> [[f64; 3]; 3] {
    // Rows of the inverse of [a b c] are the cross products divided by det.
    let det = a.dot(&b.cross(c));
    let r0 = b.cross(c) / det;
    let r1 = c.cross(a) / det;
    let r2 = a.cross(b) / det;
    [[r0.x, r0.y, r0.z], [r1.x, r1.y, r1.z], [r2.x, r2.y, r2.z]]
}

/// Triangulates unit points by their convex hull.
pub fn triangulate_unit_points(points: &[Vec3]) -> Result<SphericalTriangulation> {
    for p in points {
        let n = p.norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(SisError::NotUnit(n));
        }
    }
    let faces = hull::convex_hull(points)?;
    SphericalTriangulation::from_parts(points.to_vec(), faces)
}

impl SphericalTriangulation {
    /// Wraps an existing outward triangulation of unit points, e.g. an
    /// icosphere, and builds its location index.
    pub fn from_parts(points: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mut inverses = Vec::with_capacity(faces.len());
        for (fi, f) in faces.iter().enumerate() {
            let [a, b, c] = f.map(|i| points[i]);
            let det = a.dot(&b.cross(&c));
            if !(det.abs() > 1e-300) {
                return Err(SisError::Degenerate(format!(
                    "face {fi} passes through the origin"
                )));
            }
            inverses.push(invert_columns(&a, &b, &c));
        }
        let index = build_index(&points, &faces);
        Ok(SphericalTriangulation {
            points,
            faces,
            inverses,
            index,
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn to_mesh(&self) -> Mesh {
        Mesh::new(self.points.clone(), self.faces.clone()).expect("hull faces are valid")
    }

    /// Barycentric weights of `dir` in face `fi` if the ray along `dir`
    /// crosses the face's chord triangle (within tolerance).
    fn contains(&self, fi: usize, dir: &Vec3) -> Option<[f64; 3]> {
        let m = &self.inverses[fi];
        let l = [
            m[0][0] * dir.x + m[0][1] * dir.y + m[0][2] * dir.z,
            m[1][0] * dir.x + m[1][1] * dir.y + m[1][2] * dir.z,
            m[2][0] * dir.x + m[2][1] * dir.y + m[2][2] * dir.z,
        ];
        let s = l[0] + l[1] + l[2];
        if !(s > 0.0) {
            return None;
        }
        let l = [l[0] / s, l[1] / s, l[2] / s];
        if l.iter().all(|&x| x >= -CONTAIN_EPS) {
            // A query on a corner reproduces that corner exactly.
            if let Some(k) = l.iter().position(|&x| x > 1.0 - CORNER_SNAP) {
                let mut e = [0.0; 3];
                e[k] = 1.0;
                return Some(e);
            }
            Some(l)
        } else {
            None
        }
    }

    fn min_lambda(&self, fi: usize, dir: &Vec3) -> f64 {
        let m = &self.inverses[fi];
        let l: Vec<f64> = (0..3)
            .map(|r| m[r][0] * dir.x + m[r][1] * dir.y + m[r][2] * dir.z)
            .collect();
        let s = l[0] + l[1] + l[2];
        if s > 0.0 {
            l.iter().fold(f64::INFINITY, |a, &x| a.min(x / s))
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Linear scan over every face; the lowest-index face containing `dir`
    /// wins. Used as the fallback and as a correctness reference.
    pub fn locate_exhaustive(&self, dir: &Vec3) -> Result<BarycentricCoords> {
        let dir = normalized_dir(dir)?;
        for fi in 0..self.faces.len() {
            if let Some(lambdas) = self.contains(fi, &dir) {
                return Ok(BarycentricCoords {
                    face_index: fi,
                    lambdas,
                });
            }
        }
        // Numerical gap: take the face the direction is least outside of.
        let (fi, _) = (0..self.faces.len())
            .map(|fi| (fi, self.min_lambda(fi, &dir)))
            .fold((0, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        let m = &self.inverses[fi];
        let mut l = [0.0; 3];
        for r in 0..3 {
            l[r] = (m[r][0] * dir.x + m[r][1] * dir.y + m[r][2] * dir.z).max(0.0);
        }
        let s: f64 = l.iter().sum();
        if !(s > 0.0) {
            return Err(SisError::Numerical(format!(
                "could not locate direction {dir:?}"
            )));
        }
        Ok(BarycentricCoords {
            face_index: fi,
            lambdas: [l[0] / s, l[1] / s, l[2] / s],
        })
    }

    /// Finds the face hit by the ray from the origin along `dir` and the
    /// barycentric coordinates of the hit point in its chord triangle.
    /// Directions on shared edges resolve to the lowest face index.
    pub fn locate(&self, dir: &Vec3) -> Result<BarycentricCoords> {
        let d = normalized_dir(dir)?;
        let cell = self.index.cell_of(&d);
        for &fi in &self.index.cells[cell] {
            if let Some(lambdas) = self.contains(fi as usize, &d) {
                return Ok(BarycentricCoords {
                    face_index: fi as usize,
                    lambdas,
                });
            }
        }
        self.locate_exhaustive(&d)
    }

    /// Corner indices and weights for a located direction.
    pub fn corners(&self, bc: &BarycentricCoords) -> [usize; 3] {
        self.faces[bc.face_index]
    }
}

fn normalized_dir(dir: &Vec3) -> Result<Vec3> {
    let n = dir.norm();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(SisError::Numerical(format!(
            "cannot locate direction {dir:?}"
        )));
    }
    Ok(dir / n)
}

/// Interpolates per-point values with the barycentric weights of `dir`.
pub fn bci_interpolate(tri: &SphericalTriangulation, values: &[Vec3], dir: &Vec3) -> Result<Vec3> {
    if values.len() != tri.points.len() {
        return Err(SisError::Dimension(format!(
            "{} values for {} points",
            values.len(),
            tri.points.len()
        )));
    }
    let bc = tri.locate(dir)?;
    let [a, b, c] = tri.corners(&bc);
    let [l0, l1, l2] = bc.lambdas;
    Ok(values[a] * l0 + values[b] * l1 + values[c] * l2)
}

impl LocationIndex {
    fn cell_of(&self, d: &Vec3) -> usize {
        let (th, ph) = angles(d);
        let r = ((th / PI) * self.rows as f64)
            .floor()
            .clamp(0.0, (self.rows - 1) as f64) as usize;
        let c = (((ph + PI) / (2.0 * PI)) * self.cols as f64)
            .floor()
            .clamp(0.0, (self.cols - 1) as f64) as usize;
        r * self.cols + c
    }
}

/// Inclination in [0, pi] and azimuth in [-pi, pi].
fn angles(d: &Vec3) -> (f64, f64) {
    let c = to_spherical_coords_unchecked(d);
    (c.0 * PI, (c.1 - 0.5) * 2.0 * PI)
}

fn to_spherical_coords_unchecked(d: &Vec3) -> (f64, f64) {
    let c = to_spherical_coords(&(d / d.norm())).expect("normalised input");
    (c.theta_hat, c.phi_hat)
}

fn build_index(points: &[Vec3], faces: &[[usize; 3]]) -> LocationIndex {
    let rows = ((faces.len() as f64 / 2.0).sqrt().ceil() as usize).clamp(1, 256);
    let cols = 2 * rows;
    let mut cells: Vec<Vec<u32>> = vec![Vec::new(); rows * cols];
    let row_h = PI / rows as f64;
    let col_w = 2.0 * PI / cols as f64;
    for (fi, f) in faces.iter().enumerate() {
        let [a, b, c] = f.map(|i| points[i]);
        let sum = a + b + c;
        let center = if sum.norm() > 1e-12 {
            sum.normalize()
        } else {
            a
        };
        let cos_r = center
            .dot(&a)
            .min(center.dot(&b))
            .min(center.dot(&c))
            .clamp(-1.0, 1.0);
        let r = cos_r.acos() + CONE_MARGIN;
        let (th, ph) = angles(&center);
        let th_lo = th - r;
        let th_hi = th + r;
        let r0 = (th_lo.max(0.0) / row_h).floor() as usize;
        let r1 = ((th_hi.min(PI) / row_h).floor() as usize).min(rows - 1);
        let all_cols = th_lo <= 0.0 || th_hi >= PI || r >= PI / 2.0;
        let (c_lo, c_hi) = if all_cols {
            (0i64, cols as i64 - 1)
        } else {
            let s = (r.sin() / th_lo.sin().min(th_hi.sin())).min(1.0);
            let dphi = if s >= 1.0 { PI } else { s.asin() };
            if dphi >= PI {
                (0, cols as i64 - 1)
            } else {
                let lo = ((ph - dphi + PI) / col_w).floor() as i64;
                let hi = ((ph + dphi + PI) / col_w).floor() as i64;
                if hi - lo + 1 >= cols as i64 {
                    (0, cols as i64 - 1)
                } else {
                    (lo, hi)
                }
            }
        };
        for row in r0..=r1 {
            for col in c_lo..=c_hi {
                let col = col.rem_euclid(cols as i64) as usize;
                cells[row * cols + col].push(fi as u32);
            }
        }
    }
    for cell in &mut cells {
        cell.dedup();
    }
    LocationIndex { rows, cols, cells }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return v / n;
            }
        }
    }

    #[test]
    fn tetrahedral_directions_give_four_faces() {
        let pts: Vec<Vec3> = [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ]
        .iter()
        .map(|p| Vec3::new(p[0], p[1], p[2]).normalize())
        .collect();
        assert_eq!(triangulate_unit_points(&pts).unwrap().faces().len(), 4);
    }

    #[test]
    fn icosahedron_vertices_give_twenty_faces() {
        let ico = make_icosphere(0).unwrap();
        let tri = triangulate_unit_points(ico.vertices()).unwrap();
        assert_eq!(tri.faces().len(), 20);
    }

    #[test]
    fn random_points_hull_face_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec3> = (0..1000).map(|_| random_unit(&mut rng)).collect();
        let tri = triangulate_unit_points(&pts).unwrap();
        // Euler's formula for a simplicial polyhedron with every point on the hull.
        assert_eq!(tri.faces().len(), 2 * 1000 - 4);
        let m = tri.to_mesh();
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.is_consistently_oriented());
        for f in tri.faces() {
            let [a, b, c] = f.map(|i| pts[i]);
            assert!(a.dot(&b.cross(&c)) > 0.0);
        }
    }

    #[test]
    fn hull_is_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..200).map(|_| random_unit(&mut rng)).collect();
        let tri = triangulate_unit_points(&pts).unwrap();
        for f in tri.faces() {
            let [a, b, c] = f.map(|i| pts[i]);
            let n = (b - a).cross(&(c - a));
            for p in &pts {
                assert!(n.dot(&(p - a)) <= 1e-12);
            }
        }
    }

    #[test]
    fn hull_of_level3_icosphere_directions() {
        // Highly symmetric input with many cocircular quadruples.
        let m = make_icosphere(3).unwrap();
        let tri = triangulate_unit_points(m.vertices()).unwrap();
        assert_eq!(tri.faces().len(), 2 * m.vertex_count() - 4);
        assert!(tri.to_mesh().is_consistently_oriented());
    }

    #[test]
    fn too_few_points() {
        let pts = vec![Vec3::x(), Vec3::y(), Vec3::z()];
        assert!(triangulate_unit_points(&pts).is_err());
    }

    #[test]
    fn vertex_query_has_unit_weight() {
        let ico = make_icosphere(0).unwrap();
        let tri = triangulate_unit_points(ico.vertices()).unwrap();
        for (i, p) in ico.vertices().iter().enumerate() {
            let bc = tri.locate(p).unwrap();
            let corners = tri.corners(&bc);
            let k = corners.iter().position(|&c| c == i).unwrap();
            assert!((bc.lambdas[k] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn edge_midpoint_query() {
        let ico = make_icosphere(0).unwrap();
        let tri = triangulate_unit_points(ico.vertices()).unwrap();
        let [a, b, _] = tri.faces()[0];
        let dir = (ico.vertices()[a] + ico.vertices()[b]).normalize();
        let bc = tri.locate(&dir).unwrap();
        let mut l = bc.lambdas;
        l.sort_by(f64::total_cmp);
        assert!(l[0].abs() < 1e-9 && (l[1] - 0.5).abs() < 1e-9 && (l[2] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn indexed_matches_exhaustive_on_icosahedron() {
        let ico = make_icosphere(0).unwrap();
        let tri = triangulate_unit_points(ico.vertices()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let d = random_unit(&mut rng);
            let fast = tri.locate(&d).unwrap();
            // Oracle: independent scan solving the 3x3 system per face.
            let mut oracle = None;
            for (fi, f) in tri.faces().iter().enumerate() {
                let [a, b, c] = f.map(|i| ico.vertices()[i]);
                let m = nalgebra::Matrix3::from_columns(&[a, b, c]);
                let l = m.lu().solve(&d).unwrap();
                let s = l.sum();
                if s > 0.0 && (l / s).iter().all(|&x| x >= -1e-12) {
                    oracle = Some((fi, l / s));
                    break;
                }
            }
            let (fi, l) = oracle.unwrap();
            assert_eq!(fast.face_index, fi);
            for k in 0..3 {
                assert!((fast.lambdas[k] - l[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bci_reproduces_data_and_constants() {
        let ico = make_icosphere(1).unwrap();
        let tri = triangulate_unit_points(ico.vertices()).unwrap();
        let values: Vec<Vec3> = ico
            .vertices()
            .iter()
            .map(|p| p * 2.0 + Vec3::new(0.0, 1.0, 0.0))
            .collect();
        for (p, v) in ico.vertices().iter().zip(&values) {
            let got = bci_interpolate(&tri, &values, p).unwrap();
            assert!((got - v).norm() <= 1e-12 * v.norm().max(1.0));
        }
        let constant = vec![Vec3::new(3.0, -1.0, 2.0); values.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let d = random_unit(&mut rng);
            let got = bci_interpolate(&tri, &constant, &d).unwrap();
            assert!((got - constant[0]).norm() < 1e-12);
        }
    }

    #[test]
    fn bci_reproduces_linear_fields_at_chord_points() {
        let ico = make_icosphere(0).unwrap();
        let tri = triangulate_unit_points(ico.vertices()).unwrap();
        let a = nalgebra::Matrix3::new(1.0, 2.0, 0.5, -1.0, 0.3, 0.0, 0.2, 0.0, -2.0);
        let values: Vec<Vec3> = ico.vertices().iter().map(|p| a * p).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let d = random_unit(&mut rng);
            let bc = tri.locate(&d).unwrap();
            let [i, j, k] = tri.corners(&bc);
            let chord = ico.vertices()[i] * bc.lambdas[0]
                + ico.vertices()[j] * bc.lambdas[1]
                + ico.vertices()[k] * bc.lambdas[2];
            let got = bci_interpolate(&tri, &values, &d).unwrap();
            assert!((got - a * chord).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_direction_fails() {
        let ico = make_icosphere(0).unwrap();
        let tri = triangulate_unit_points(ico.vertices()).unwrap();
        assert!(tri.locate(&Vec3::zeros()).is_err());
    }
}
