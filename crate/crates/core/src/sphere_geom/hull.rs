//! Incremental convex hull of points on the unit sphere.
//!
//! For unit points the hull triangulation is the spherical Delaunay
//! triangulation. Points are inserted in lexicographic order so the output
//! depends only on the point set, not on the order it was given in.

use std::collections::{HashMap, VecDeque};

use crate::error::{Result, SisError};
use crate::Vec3;

const REL_EPS: f64 = 1e-12;

/// Signed volume test: positive when `p` lies on the outer side of the
/// counterclockwise face `(a, b, c)`.
fn orient(a: &Vec3, b: &Vec3, c: &Vec3, p: &Vec3) -> (f64, f64) {
    let n = (b - a).cross(&(c - a));
    let d = p - a;
    let value = n.dot(&d);
    let scale = n.norm() * d.norm().max(1.0);
    (value, REL_EPS * scale)
}

struct HullBuilder<'a> {
    points: &'a [Vec3],
    faces: Vec<[usize; 3]>,
    alive: Vec<bool>,
    edges: HashMap<(usize, usize), usize>,
}

impl<'a> HullBuilder<'a> {
    fn add_face(&mut self, f: [usize; 3]) {
        let id = self.faces.len();
        self.faces.push(f);
        self.alive.push(true);
        for k in 0..3 {
            self.edges.insert((f[k], f[(k + 1) % 3]), id);
        }
    }

    fn kill_face(&mut self, id: usize) {
        self.alive[id] = false;
        let f = self.faces[id];
        for k in 0..3 {
            let e = (f[k], f[(k + 1) % 3]);
            if self.edges.get(&e) == Some(&id) {
                self.edges.remove(&e);
            }
        }
    }

    fn orient_face(&self, id: usize, p: usize) -> (f64, f64) {
        let [a, b, c] = self.faces[id];
        let pts = self.points;
        orient(&pts[a], &pts[b], &pts[c], &pts[p])
    }

    fn insert(&mut self, p: usize) {
        // Seed: first strictly visible face, else the most visible one.
        let mut seed = None;
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for id in 0..self.faces.len() {
            if !self.alive[id] {
                continue;
            }
            let (v, eps) = self.orient_face(id, p);
            if v > eps {
                seed = Some(id);
                break;
            }
            if v - eps > best.0 {
                best = (v - eps, id);
            }
        }
        let seed = seed.unwrap_or(best.1);

        let mut visible = vec![seed];
        let mut is_visible: HashMap<usize, bool> = HashMap::new();
        is_visible.insert(seed, true);
        let mut queue = VecDeque::from([seed]);
        while let Some(id) = queue.pop_front() {
            let f = self.faces[id];
            for k in 0..3 {
                let twin = (f[(k + 1) % 3], f[k]);
                if let Some(&nb) = self.edges.get(&twin) {
                    if is_visible.contains_key(&nb) {
                        continue;
                    }
                    let (v, eps) = self.orient_face(nb, p);
                    let vis = v > eps;
                    is_visible.insert(nb, vis);
                    if vis {
                        visible.push(nb);
                        queue.push_back(nb);
                    }
                }
            }
        }

        let mut horizon = Vec::new();
        for &id in &visible {
            let f = self.faces[id];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let nb = self.edges.get(&(b, a)).copied();
                if !matches!(nb.and_then(|n| is_visible.get(&n)), Some(true)) {
                    horizon.push((a, b));
                }
            }
        }
        for &id in &visible {
            self.kill_face(id);
        }
        horizon.sort_unstable();
        for (a, b) in horizon {
            self.add_face([a, b, p]);
        }
    }
}

/// Lexicographic comparison on (x, y, z).
fn lex(a: &Vec3, b: &Vec3) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
}

/// Convex hull faces (outward, counterclockwise) of the given unit points.
pub(crate) fn convex_hull(points: &[Vec3]) -> Result<Vec<[usize; 3]>> {
    if points.len() < 4 {
        return Err(SisError::Degenerate(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| lex(&points[i], &points[j]).then(i.cmp(&j)));

    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if points[j].x - points[i].x > 1e-9 {
                break;
            }
            if (points[j] - points[i]).norm() <= 1e-9 {
                return Err(SisError::Degenerate(format!(
                    "duplicate points {} and {}",
                    i.min(j),
                    i.max(j)
                )));
            }
        }
    }

    // Initial simplex from the first points in sorted order.
    let (i0, i1) = (order[0], order[1]);
    let i2 = order[2..]
        .iter()
        .copied()
        .find(|&k| {
            (points[i1] - points[i0])
                .cross(&(points[k] - points[i0]))
                .norm()
                > 1e-12
        })
        .ok_or_else(|| SisError::Degenerate("all points collinear".into()))?;
    let i3 = order[2..]
        .iter()
        .copied()
        .filter(|&k| k != i2)
        .find(|&k| {
            let (v, eps) = orient(&points[i0], &points[i1], &points[i2], &points[k]);
            v.abs() > eps
        })
        .ok_or_else(|| SisError::Degenerate("all points coplanar".into()))?;

    let mut b = HullBuilder {
        points,
        faces: Vec::with_capacity(points.len() * 6),
        alive: Vec::with_capacity(points.len() * 6),
        edges: HashMap::with_capacity(points.len() * 6),
    };
    let (v, _) = orient(&points[i0], &points[i1], &points[i2], &points[i3]);
    let (a, c) = if v > 0.0 { (i2, i0) } else { (i0, i2) };
    // With i3 behind face (a, i1, c) all four faces below point outward.
    b.add_face([a, i1, c]);
    b.add_face([a, i3, i1]);
    b.add_face([i1, i3, c]);
    b.add_face([c, i3, a]);

    for &p in &order {
        if p == i0 || p == i1 || p == i2 || p == i3 {
            continue;
        }
        b.insert(p);
    }

    Ok(b.faces
        .iter()
        .zip(&b.alive)
        .filter(|(_, &alive)| alive)
        .map(|(f, _)| *f)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_simplex_orientation() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(-1.0, -1.0, -1.0).normalize(),
        ];
        let faces = convex_hull(&pts).unwrap();
        assert_eq!(faces.len(), 4);
        for f in faces {
            let [a, b, c] = f.map(|i| pts[i]);
            assert!(a.dot(&b.cross(&c)) > 0.0, "face {f:?} inward");
        }
    }

    #[test]
    fn duplicates_rejected() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(-1.0, 0.0, 0.0),
        ];
        assert!(matches!(convex_hull(&pts), Err(SisError::Degenerate(_))));
    }

    #[test]
    fn coplanar_rejected() {
        let pts: Vec<Vec3> = (0..6)
            .map(|k| {
                let t = k as f64;
                Vec3::new(t.cos(), t.sin(), 0.0)
            })
            .collect();
        assert!(matches!(convex_hull(&pts), Err(SisError::Degenerate(_))));
    }
}
