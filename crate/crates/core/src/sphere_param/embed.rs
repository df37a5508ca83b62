//! Spherical embedding of closed genus-0 meshes.
//!
//! Pipeline: puncture the mesh at its most regular triangle, solve a
//! cotangent-weighted harmonic map of the resulting disk onto an equilateral
//! triangle, lift the plane to the sphere with inverse stereographic
//! projection, re-solve the cap around the puncture from the opposite pole,
//! and finally apply Möbius transformations until the centroid of the
//! embedded vertices sits at the origin.

use std::collections::HashMap;

use super::solver::{conjugate_gradient, CsrMatrix};
use super::SphericalEmbedding;
use crate::error::{Result, SisError};
use crate::mesh::{boundary_loops, one_ring, Mesh};
use crate::Vec3;

const MIN_COT_WEIGHT: f64 = 1e-8;
const CG_TOL: f64 = 1e-10;
const CENTERING_TOL: f64 = 1e-3;
const CENTERING_TARGET: f64 = 1e-13;
const CENTERING_MAX_ITER: usize = 100;
const CORRECTION_PASSES: usize = 2;
const FIXED_CAP_FRACTION: f64 = 0.1;
const PUNCTURE_ATTEMPTS: usize = 8;
const UNTANGLE_ROUNDS: usize = 4;
const UNTANGLE_SWEEPS: usize = 100;

/// Stable topology fingerprint used to tie an embedding to its mesh.
pub fn mesh_fingerprint(mesh: &Mesh) -> String {
    // FNV-1a over the face list.
    let mut h: u64 = 0xcbf29ce484222325;
    for f in mesh.faces() {
        for &v in f {
            for b in (v as u64).to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    format!("V{}F{}-{:016x}", mesh.vertex_count(), mesh.face_count(), h)
}

fn corner_cot(p: &Vec3, q: &Vec3, r: &Vec3) -> Result<f64> {
    // Cotangent of the angle at p in triangle (p, q, r).
    let u = q - p;
    let v = r - p;
    let cross = u.cross(&v).norm();
    if !(cross > 1e-300) {
        return Err(SisError::Degenerate(
            "zero-area face in cotangent weights".into(),
        ));
    }
    Ok(u.dot(&v) / cross)
}

/// Symmetric cotangent weights over edges, skipping face `skip` if given.
fn cotangent_weights(mesh: &Mesh, skip: Option<usize>) -> Result<HashMap<(usize, usize), f64>> {
    let v = mesh.vertices();
    let mut w: HashMap<(usize, usize), f64> = HashMap::with_capacity(mesh.face_count() * 2);
    for (fi, f) in mesh.faces().iter().enumerate() {
        if Some(fi) == skip {
            continue;
        }
        for k in 0..3 {
            let (i, j, o) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            let c = corner_cot(&v[o], &v[i], &v[j])?;
            *w.entry((i.min(j), i.max(j))).or_insert(0.0) += 0.5 * c;
        }
    }
    for val in w.values_mut() {
        *val = val.max(MIN_COT_WEIGHT);
    }
    Ok(w)
}

/// Solves the Dirichlet problem for the harmonic map: vertices with
/// `fixed[i] = Some(pos)` stay put, the rest satisfy the weighted mean
/// value property.
fn harmonic_solve(
    n: usize,
    weights: &HashMap<(usize, usize), f64>,
    fixed: &[Option<[f64; 2]>],
) -> Result<Vec<[f64; 2]>> {
    let mut free_index = vec![usize::MAX; n];
    let mut free = Vec::new();
    for i in 0..n {
        if fixed[i].is_none() {
            free_index[i] = free.len();
            free.push(i);
        }
    }
    let m = free.len();
    let mut out: Vec<[f64; 2]> = fixed.iter().map(|f| f.unwrap_or([0.0, 0.0])).collect();
    if m == 0 {
        return Ok(out);
    }
    let mut triplets = Vec::with_capacity(weights.len() * 4);
    let mut rhs = [vec![0.0; m], vec![0.0; m]];
    // Sorted edge order keeps the assembled sums bit-for-bit reproducible.
    let mut edges: Vec<(&(usize, usize), &f64)> = weights.iter().collect();
    edges.sort_unstable_by_key(|(e, _)| **e);
    for (&(i, j), &w) in edges {
        for (a, b) in [(i, j), (j, i)] {
            let ia = free_index[a];
            if ia == usize::MAX {
                continue;
            }
            triplets.push((ia, ia, w));
            match fixed[b] {
                Some(pos) => {
                    rhs[0][ia] += w * pos[0];
                    rhs[1][ia] += w * pos[1];
                }
                None => triplets.push((ia, free_index[b], -w)),
            }
        }
    }
    let a = CsrMatrix::from_triplets(m, triplets);
    for axis in 0..2 {
        let mut x: Vec<f64> = free.iter().map(|&i| out[i][axis]).collect();
        conjugate_gradient(&a, &rhs[axis], &mut x, CG_TOL, 10 * n)?;
        for (k, &i) in free.iter().enumerate() {
            out[i][axis] = x[k];
        }
    }
    Ok(out)
}

/// Interior angles of a face, in radians.
fn min_angle(mesh: &Mesh, f: &[usize; 3]) -> f64 {
    let v = mesh.vertices();
    (0..3)
        .map(|k| {
            let p = v[f[k]];
            let u = v[f[(k + 1) % 3]] - p;
            let w = v[f[(k + 2) % 3]] - p;
            u.angle(&w)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Lifts plane points to the sphere; the plane is mirrored in y so that
/// counterclockwise planar faces become outward-facing spherical faces.
fn inverse_stereographic(w: &[f64; 2]) -> Vec3 {
    let (x, y) = (w[0], -w[1]);
    let r2 = x * x + y * y;
    Vec3::new(2.0 * x, 2.0 * y, r2 - 1.0) / (1.0 + r2)
}

/// Stereographic projection from the south pole; inverse of
/// [`inverse_south`].
fn project_south(p: &Vec3) -> [f64; 2] {
    [p.x / (1.0 + p.z), p.y / (1.0 + p.z)]
}

fn inverse_south(q: &[f64; 2]) -> Vec3 {
    let r2 = q[0] * q[0] + q[1] * q[1];
    Vec3::new(2.0 * q[0], 2.0 * q[1], 1.0 - r2) / (1.0 + r2)
}

pub(crate) fn count_flipped(faces: &[[usize; 3]], points: &[Vec3]) -> usize {
    faces
        .iter()
        .filter(|f| {
            let [a, b, c] = f.map(|i| points[i]);
            !(a.dot(&b.cross(&c)) > 0.0)
        })
        .count()
}

fn flipped_faces(faces: &[[usize; 3]], points: &[Vec3]) -> Vec<usize> {
    (0..faces.len())
        .filter(|&fi| {
            let [a, b, c] = faces[fi].map(|i| points[i]);
            !(a.dot(&b.cross(&c)) > 0.0)
        })
        .collect()
}

/// Repairs faces whose geodesic triangle is inverted (typically huge faces
/// on coarse meshes) with projected Gauss-Seidel sweeps toward each
/// vertex's one-ring mean. The sweep region starts at the vertices of the
/// flipped faces and grows by one ring per attempt until the flips clear.
fn untangle(mesh: &Mesh, points: &mut [Vec3]) {
    let faces = mesh.faces();
    let mut bad = flipped_faces(faces, points);
    if bad.is_empty() {
        return;
    }
    let start = points.to_vec();
    let ring = one_ring(mesh);
    let mut active = vec![false; points.len()];
    for &fi in &bad {
        faces[fi].iter().for_each(|&i| active[i] = true);
    }
    let mut depth = 0;
    while !bad.is_empty() && depth <= points.len() {
        let grown: Vec<usize> = (0..points.len())
            .filter(|&i| active[i])
            .flat_map(|i| ring.neighbors(i).iter().copied())
            .collect();
        grown.into_iter().for_each(|i| active[i] = true);
        depth += 1;
        let region: Vec<usize> = (0..points.len()).filter(|&i| active[i]).collect();
        let sweeps = if region.len() == points.len() {
            20 * UNTANGLE_SWEEPS
        } else {
            UNTANGLE_SWEEPS
        };
        for _ in 0..sweeps {
            for &i in &region {
                let sum = ring
                    .neighbors(i)
                    .iter()
                    .fold(Vec3::zeros(), |acc, &j| acc + points[j]);
                let norm = sum.norm();
                if norm > 1e-12 {
                    points[i] = sum / norm;
                }
            }
            if region.len() == points.len() {
                // Whole-mesh sweeps drift toward a single point without this.
                let c = centroid(points);
                for p in points.iter_mut() {
                    *p = (*p - c).normalize();
                }
            }
            bad = flipped_faces(faces, points);
            if bad.is_empty() {
                break;
            }
        }
        if region.len() == points.len() {
            break;
        }
    }
    if bad.len() > flipped_faces(faces, &start).len() {
        points.copy_from_slice(&start);
    }
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / points.len() as f64
}

/// Conformal automorphism of the ball sending `a` to the origin, restricted
/// to the unit sphere.
pub(crate) fn mobius(a: &Vec3, x: &Vec3) -> Vec3 {
    let d = x - a;
    let y = d * ((1.0 - a.norm_squared()) / d.norm_squared()) - a;
    y / y.norm()
}

/// Moves the centroid of `points` to the origin with Möbius transformations.
/// Returns the final centroid norm.
pub(crate) fn mobius_center(points: &mut [Vec3]) -> f64 {
    let mut c = centroid(points);
    let mut norm = c.norm();
    let mut step = 1.0;
    for _ in 0..CENTERING_MAX_ITER {
        if norm < CENTERING_TARGET {
            break;
        }
        // Backtrack until the centroid shrinks.
        let mut accepted = false;
        for _ in 0..30 {
            let a = c * step;
            if a.norm() >= 0.95 {
                step *= 0.5;
                continue;
            }
            let trial: Vec<Vec3> = points.iter().map(|x| mobius(&a, x)).collect();
            let tc = centroid(&trial);
            if tc.norm() < norm {
                points.copy_from_slice(&trial);
                c = tc;
                norm = tc.norm();
                accepted = true;
                step = (step * 1.5).min(1.0);
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    norm
}

/// Re-solves the harmonic map, seen from the south pole, for every vertex
/// outside the southernmost `fraction` of vertices. Returns `None` when the
/// result would add flipped faces.
fn pole_correction(
    mesh: &Mesh,
    weights: &HashMap<(usize, usize), f64>,
    points: &[Vec3],
    fraction: f64,
) -> Result<Option<Vec<Vec3>>> {
    let n = points.len();
    let mut zs: Vec<f64> = points.iter().map(|p| p.z).collect();
    zs.sort_by(f64::total_cmp);
    let k = ((n as f64 * fraction).ceil() as usize).clamp(3, n - 1);
    let cut = zs[k - 1];
    let fixed: Vec<Option<[f64; 2]>> = points
        .iter()
        .map(|p| {
            if p.z > cut {
                None
            } else {
                Some(project_south(p))
            }
        })
        .collect();
    let solved = harmonic_solve(n, weights, &fixed)?;
    let corrected: Vec<Vec3> = solved
        .iter()
        .zip(points)
        .zip(&fixed)
        .map(|((q, p), f)| if f.is_none() { inverse_south(q) } else { *p })
        .collect();
    let before = count_flipped(mesh.faces(), points);
    let after = count_flipped(mesh.faces(), &corrected);
    if after > before {
        log::debug!("pole correction rejected ({after} flips vs {before})");
        return Ok(None);
    }
    Ok(Some(corrected))
}

pub(crate) fn parameterize(mesh: &Mesh) -> Result<SphericalEmbedding> {
    if mesh.face_count() < 4 {
        return Err(SisError::InvalidMesh("need at least 4 faces".into()));
    }
    if !boundary_loops(mesh)?.is_empty() {
        return Err(SisError::InvalidMesh(
            "mesh has boundary; fill holes first".into(),
        ));
    }
    let euler = mesh.euler_characteristic();
    if euler != 2 {
        return Err(SisError::NotGenus0 { euler });
    }
    if !mesh.is_consistently_oriented() {
        return Err(SisError::InvalidMesh(
            "inconsistent face orientation".into(),
        ));
    }

    // Puncture at the most regular face (largest minimum angle). Coarse
    // meshes can leave inverted faces that no later stage repairs, so a few
    // runner-up punctures are tried before giving up.
    let mut order: Vec<(f64, usize)> = mesh
        .faces()
        .iter()
        .enumerate()
        .map(|(fi, f)| (min_angle(mesh, f), fi))
        .collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let full_weights = cotangent_weights(mesh, None)?;
    let mut first_err = None;
    for &(_, cut) in order.iter().take(PUNCTURE_ATTEMPTS) {
        match embed_punctured(mesh, cut, &full_weights) {
            Ok(points) => {
                return Ok(SphericalEmbedding {
                    sphere_points: points,
                    source_mesh_id: mesh_fingerprint(mesh),
                })
            }
            Err(e @ SisError::FlippedTriangles { .. }) => {
                log::debug!("puncture at face {cut}: {e}");
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(first_err.expect("at least one puncture is attempted"))
}

fn embed_punctured(
    mesh: &Mesh,
    cut: usize,
    full_weights: &HashMap<(usize, usize), f64>,
) -> Result<Vec<Vec3>> {
    let n = mesh.vertex_count();
    let [a, b, c] = mesh.faces()[cut];

    // Boundary a -> c -> b runs counterclockwise around the punctured disk.
    let mut fixed: Vec<Option<[f64; 2]>> = vec![None; n];
    let corner = |deg: f64| {
        let t = deg.to_radians();
        [t.cos(), t.sin()]
    };
    fixed[a] = Some(corner(90.0));
    fixed[c] = Some(corner(210.0));
    fixed[b] = Some(corner(330.0));
    let weights = cotangent_weights(mesh, Some(cut))?;
    let mut plane = harmonic_solve(n, &weights, &fixed)?;

    // Scale so the median vertex lands on the equator.
    let mut radii: Vec<f64> = plane.iter().map(|w| w[0].hypot(w[1])).collect();
    radii.sort_by(f64::total_cmp);
    let median = radii[(n - 1) / 2];
    let scale = if median > 1e-12 {
        1.0 / median
    } else {
        1.0 / (radii.iter().sum::<f64>() / n as f64).max(1e-12)
    };
    for w in &mut plane {
        w[0] *= scale;
        w[1] *= scale;
    }
    let mut points: Vec<Vec3> = plane.iter().map(inverse_stereographic).collect();

    // Re-solve everything but a small cap opposite the puncture, projecting
    // from that cap's pole; then alternate poles.
    for pass in 0..CORRECTION_PASSES {
        let flip = pass % 2 == 1;
        if flip {
            points
                .iter_mut()
                .for_each(|p| *p = Vec3::new(p.x, -p.y, -p.z));
        }
        if let Some(corrected) = pole_correction(mesh, full_weights, &points, FIXED_CAP_FRACTION)? {
            points = corrected;
        }
        if flip {
            points
                .iter_mut()
                .for_each(|p| *p = Vec3::new(p.x, -p.y, -p.z));
        }
    }

    for p in &mut points {
        *p /= p.norm();
    }
    let mut centroid_norm = mobius_center(&mut points);
    // Centering can re-invert large faces, so alternate until both hold.
    for _ in 0..UNTANGLE_ROUNDS {
        if count_flipped(mesh.faces(), &points) == 0 {
            break;
        }
        untangle(mesh, &mut points);
        centroid_norm = mobius_center(&mut points);
    }
    if !(centroid_norm < CENTERING_TOL) {
        return Err(SisError::Numerical(format!(
            "Möbius centering stalled at centroid norm {centroid_norm:e}"
        )));
    }
    let flipped = count_flipped(mesh.faces(), &points);
    if flipped > 0 {
        return Err(SisError::FlippedTriangles { count: flipped });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn subdivide(m: &Mesh) -> Mesh {
        let mut v = m.vertices().to_vec();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut faces = Vec::new();
        let mut midpoint = |a: usize, b: usize, v: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                v.push(0.5 * (v[a] + v[b]));
                v.len() - 1
            })
        };
        for &[a, b, c] in m.faces() {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            faces.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        Mesh::new(v, faces).unwrap()
    }

    // Flat, coarse tetrahedra put valence-3 cone points next to the
    // puncture, which used to leave inverted faces on the sphere.
    #[test]
    fn coarse_stretched_tetrahedra_embed_without_flips() {
        let s = 1.0 / 3f64.sqrt();
        let base = Mesh::new(
            vec![
                Vec3::new(s, s, s),
                Vec3::new(s, -s, -s),
                Vec3::new(-s, s, -s),
                Vec3::new(-s, -s, s),
            ],
            vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
        )
        .unwrap();
        let mut m = base;
        for level in 1..=3 {
            m = subdivide(&m);
            for seed in 0..25 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let k = Vec3::new(
                    rng.gen_range(0.7..1.4),
                    rng.gen_range(0.7..1.4),
                    rng.gen_range(0.7..1.4),
                );
                let w: f64 = rng.gen_range(0.03..0.08);
                let v = m
                    .vertices()
                    .iter()
                    .map(|p| {
                        p.component_mul(&k) * (1.0 + w * (4.0 * p.x).sin() * (3.0 * p.y).cos())
                    })
                    .collect();
                let deformed = m.with_vertices(v).unwrap();
                let emb = parameterize(&deformed)
                    .unwrap_or_else(|e| panic!("level {level} seed {seed}: {e}"));
                assert_eq!(count_flipped(deformed.faces(), &emb.sphere_points), 0);
                assert!(centroid(&emb.sphere_points).norm() < CENTERING_TOL);
            }
        }
    }
}
