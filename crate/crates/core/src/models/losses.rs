//! L1 reconstruction and umbrella-Laplacian losses with analytic gradients.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SisError};
use crate::mesh::NeighborStructure;
use crate::nn::Real;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the Laplacian term.
    pub gamma: f64,
    /// Drop hole-fill vertices from both terms.
    pub exclude_filled: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 0.05,
            exclude_filled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossValue {
    pub rec: f64,
    pub lap: f64,
    pub total: f64,
}

/// Which prediction rows enter each loss term. Rows index the prediction
/// matrix, which may hold a subset of the template vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct LossPlan {
    rows: usize,
    rec_rows: Vec<usize>,
    lap: Vec<(usize, Vec<usize>)>,
}

fn check_ring(nbrs: &NeighborStructure, v: usize) -> Result<()> {
    if nbrs.degree(v) == 0 {
        return Err(SisError::InvalidMesh(format!(
            "isolated vertex {v} in Laplacian loss"
        )));
    }
    Ok(())
}

impl LossPlan {
    /// Every vertex is a row. With `filled`, flagged vertices leave the
    /// reconstruction term and every Laplacian term that touches them.
    pub fn full(nbrs: &NeighborStructure, filled: Option<&[bool]>) -> Result<Self> {
        let n = nbrs.vertex_count();
        let is_filled = |v: usize| filled.is_some_and(|f| f[v]);
        let mut lap = Vec::with_capacity(n);
        for v in 0..n {
            check_ring(nbrs, v)?;
            let ring = nbrs.neighbors(v);
            if !is_filled(v) && !ring.iter().any(|&j| is_filled(j)) {
                lap.push((v, ring.to_vec()));
            }
        }
        Ok(LossPlan {
            rows: n,
            rec_rows: (0..n).filter(|&v| !is_filled(v)).collect(),
            lap,
        })
    }

    /// Laplacian terms at `centers` only; the rows are the centers plus
    /// their one-rings, returned as template vertex ids in row order.
    pub fn around(
        nbrs: &NeighborStructure,
        filled: Option<&[bool]>,
        centers: &[usize],
    ) -> Result<(Self, Vec<usize>)> {
        let is_filled = |v: usize| filled.is_some_and(|f| f[v]);
        let mut ids = BTreeSet::new();
        for &c in centers {
            check_ring(nbrs, c)?;
            ids.insert(c);
            ids.extend(nbrs.neighbors(c).iter().copied());
        }
        let vertices: Vec<usize> = ids.into_iter().collect();
        let row_of: HashMap<usize, usize> =
            vertices.iter().enumerate().map(|(r, &v)| (v, r)).collect();
        let mut lap = Vec::with_capacity(centers.len());
        for &c in centers {
            let ring = nbrs.neighbors(c);
            if !is_filled(c) && !ring.iter().any(|&j| is_filled(j)) {
                lap.push((row_of[&c], ring.iter().map(|j| row_of[j]).collect()));
            }
        }
        let plan = LossPlan {
            rows: vertices.len(),
            rec_rows: vertices
                .iter()
                .enumerate()
                .filter(|(_, &v)| !is_filled(v))
                .map(|(r, _)| r)
                .collect(),
            lap,
        };
        Ok((plan, vertices))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Evaluates `L_rec + gamma * L_lap` for `pred` against `target`, both
    /// `rows x 3`. Adds the gradient with respect to `pred` into `grad` if
    /// given.
    pub fn evaluate<T: Real>(
        &self,
        pred: &[T],
        target: &[T],
        gamma: f64,
        grad: Option<&mut [T]>,
    ) -> Result<LossValue> {
        if pred.len() != self.rows * 3 || target.len() != self.rows * 3 {
            return Err(SisError::Dimension(format!(
                "loss expects {} rows, got {} and {}",
                self.rows,
                pred.len() / 3,
                target.len() / 3
            )));
        }
        let diff = |r: usize, d: usize| pred[3 * r + d].to_f64() - target[3 * r + d].to_f64();
        let sign = |x: f64| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        };

        let mut rec = 0.0;
        for &r in &self.rec_rows {
            for d in 0..3 {
                rec += diff(r, d).abs();
            }
        }
        let rec_norm = (3 * self.rec_rows.len()).max(1) as f64;
        rec /= rec_norm;

        // The Laplacian of (pred - target) is the difference of Laplacians.
        let mut lap = 0.0;
        let mut lap_signs = Vec::with_capacity(self.lap.len());
        for (c, ring) in &self.lap {
            let k = ring.len() as f64;
            let mut s = [0.0; 3];
            for d in 0..3 {
                let mean: f64 = ring.iter().map(|&j| diff(j, d)).sum::<f64>() / k;
                let t = diff(*c, d) - mean;
                lap += t.abs();
                s[d] = sign(t);
            }
            lap_signs.push(s);
        }
        let lap_norm = self.lap.len().max(1) as f64;
        lap /= lap_norm;

        if let Some(g) = grad {
            if g.len() != pred.len() {
                return Err(SisError::Dimension("gradient buffer size".into()));
            }
            for &r in &self.rec_rows {
                for d in 0..3 {
                    g[3 * r + d] += T::from_f64(sign(diff(r, d)) / rec_norm);
                }
            }
            let w = gamma / lap_norm;
            for ((c, ring), s) in self.lap.iter().zip(&lap_signs) {
                let k = ring.len() as f64;
                for d in 0..3 {
                    if s[d] == 0.0 {
                        continue;
                    }
                    g[3 * c + d] += T::from_f64(w * s[d]);
                    for &j in ring {
                        g[3 * j + d] -= T::from_f64(w * s[d] / k);
                    }
                }
            }
        }
        Ok(LossValue {
            rec,
            lap,
            total: rec + gamma * lap,
        })
    }
}

fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn same_len(a: &[Vec3], b: &[Vec3]) -> Result<()> {
    if a.len() != b.len() {
        return Err(SisError::Dimension(format!(
            "{} vs {} vertices",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Mean absolute error over every coordinate of every vertex.
pub fn loss_reconstruction(v_hat: &[Vec3], v: &[Vec3]) -> Result<f64> {
    same_len(v_hat, v)?;
    if v.is_empty() {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for (a, b) in v_hat.iter().zip(v) {
        for d in 0..3 {
            s += (a[d] - b[d]).abs();
        }
    }
    Ok(s / (3 * v.len()) as f64)
}

/// Sum over vertices of the L1 norm of the difference between umbrella
/// Laplacians, divided by the vertex count.
pub fn loss_laplacian(v_hat: &[Vec3], v: &[Vec3], nbrs: &NeighborStructure) -> Result<f64> {
    same_len(v_hat, v)?;
    let plan = LossPlan::full(nbrs, None)?;
    Ok(plan.evaluate(&flatten(v_hat), &flatten(v), 0.0, None)?.lap)
}

pub fn loss_total(
    v_hat: &[Vec3],
    v: &[Vec3],
    nbrs: &NeighborStructure,
    cfg: &LossConfig,
) -> Result<f64> {
    loss_total_masked(v_hat, v, nbrs, cfg, None)
}

/// [`loss_total`] with optional hole-fill flags, honoured when
/// `cfg.exclude_filled` is set.
pub fn loss_total_masked(
    v_hat: &[Vec3],
    v: &[Vec3],
    nbrs: &NeighborStructure,
    cfg: &LossConfig,
    filled: Option<&[bool]>,
) -> Result<f64> {
    same_len(v_hat, v)?;
    if cfg.gamma < 0.0 {
        return Err(SisError::Config("gamma must be non-negative".into()));
    }
    let plan = LossPlan::full(nbrs, if cfg.exclude_filled { filled } else { None })?;
    Ok(plan
        .evaluate(&flatten(v_hat), &flatten(v), cfg.gamma, None)?
        .total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::one_ring;
    use crate::nn::gradcheck::check_gradients;
    use crate::sphere_geom::make_icosphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn jitter(v: &[Vec3], rng: &mut ChaCha8Rng, s: f64) -> Vec<Vec3> {
        v.iter()
            .map(|p| {
                p + Vec3::new(
                    rng.gen_range(-s..s),
                    rng.gen_range(-s..s),
                    rng.gen_range(-s..s),
                )
            })
            .collect()
    }

    #[test]
    fn zero_for_identical_meshes() {
        let m = make_icosphere(1).unwrap();
        let n = one_ring(&m);
        let v = m.vertices();
        assert_eq!(loss_reconstruction(v, v).unwrap(), 0.0);
        assert_eq!(loss_laplacian(v, v, &n).unwrap(), 0.0);
        assert_eq!(loss_total(v, v, &n, &LossConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn unit_offset_gives_one_third() {
        let m = make_icosphere(1).unwrap();
        let shifted: Vec<Vec3> = m.vertices().iter().map(|p| p + Vec3::x()).collect();
        assert!((loss_reconstruction(&shifted, m.vertices()).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // The Laplacian ignores a common translation.
        assert!(loss_laplacian(&shifted, m.vertices(), &one_ring(&m)).unwrap() < 1e-14);
    }

    #[test]
    fn matches_naive_loops() {
        let m = make_icosphere(0).unwrap();
        let n = one_ring(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = jitter(m.vertices(), &mut rng, 0.2);
        let b = jitter(m.vertices(), &mut rng, 0.2);
        let mut rec = 0.0;
        for i in 0..a.len() {
            for d in 0..3 {
                rec += (a[i][d] - b[i][d]).abs();
            }
        }
        rec /= (3 * a.len()) as f64;
        let mut lap = 0.0;
        for i in 0..a.len() {
            let ring = n.neighbors(i);
            for d in 0..3 {
                let la = a[i][d] - ring.iter().map(|&j| a[j][d]).sum::<f64>() / ring.len() as f64;
                let lb = b[i][d] - ring.iter().map(|&j| b[j][d]).sum::<f64>() / ring.len() as f64;
                lap += (la - lb).abs();
            }
        }
        lap /= a.len() as f64;
        assert!((loss_reconstruction(&a, &b).unwrap() - rec).abs() < 1e-14);
        assert!((loss_laplacian(&a, &b, &n).unwrap() - lap).abs() < 1e-14);
        let total = loss_total(&a, &b, &n, &LossConfig::default()).unwrap();
        let (a_rec, b_lap) = (
            loss_reconstruction(&a, &b).unwrap(),
            loss_laplacian(&a, &b, &n).unwrap(),
        );
        assert_eq!(total, a_rec + 0.05 * b_lap);
        let rec_only = LossConfig {
            gamma: 0.0,
            ..Default::default()
        };
        assert_eq!(
            loss_total(&a, &b, &n, &rec_only).unwrap(),
            loss_reconstruction(&a, &b).unwrap()
        );
    }

    #[test]
    fn permutation_consistent() {
        let m = make_icosphere(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = jitter(m.vertices(), &mut rng, 0.1);
        let b = m.vertices().to_vec();
        let n = m.vertex_count();
        let perm: Vec<usize> = (0..n).map(|i| (i * 17 + 5) % n).collect();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let faces: Vec<[usize; 3]> = m.faces().iter().map(|f| f.map(|v| inv[v])).collect();
        let pa: Vec<Vec3> = perm.iter().map(|&o| a[o]).collect();
        let pb: Vec<Vec3> = perm.iter().map(|&o| b[o]).collect();
        let pm = crate::mesh::Mesh::new(pb.clone(), faces).unwrap();
        let cfg = LossConfig::default();
        let l0 = loss_total(&a, &b, &one_ring(&m), &cfg).unwrap();
        let l1 = loss_total(&pa, &pb, &one_ring(&pm), &cfg).unwrap();
        assert!((l0 - l1).abs() < 1e-12);
    }

    #[test]
    fn isolated_vertex_rejected() {
        let m = crate::mesh::Mesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let v = m.vertices();
        assert!(loss_laplacian(v, v, &one_ring(&m)).is_err());
    }

    #[test]
    fn filled_vertices_excluded() {
        let m = make_icosphere(1).unwrap();
        let n = one_ring(&m);
        let mut filled = vec![false; m.vertex_count()];
        filled[0] = true;
        let mut a = m.vertices().to_vec();
        a[0] += Vec3::new(5.0, 0.0, 0.0);
        let cfg = LossConfig::default();
        assert_eq!(
            loss_total_masked(&a, m.vertices(), &n, &cfg, Some(&filled)).unwrap(),
            0.0
        );
        let keep = LossConfig {
            exclude_filled: false,
            ..cfg
        };
        assert!(loss_total_masked(&a, m.vertices(), &n, &keep, Some(&filled)).unwrap() > 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = make_icosphere(1).unwrap();
        let n = one_ring(&m);
        let plan = LossPlan::full(&n, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let target = flatten(m.vertices());
        for _ in 0..20 {
            let pred = flatten(&jitter(m.vertices(), &mut rng, 0.3));
            let mut g = vec![0.0; pred.len()];
            plan.evaluate(&pred, &target, 0.05, Some(&mut g)).unwrap();
            let idx = crate::nn::gradcheck::sample_indices(pred.len(), 20, &mut rng);
            let rep = check_gradients(
                &mut |p: &[f64]| plan.evaluate(p, &target, 0.05, None).unwrap().total,
                &pred,
                &g,
                &idx,
                1e-5,
            );
            assert!(rep.max_rel_error < 1e-4, "{}", rep.max_rel_error);
        }
    }

    #[test]
    fn local_plan_matches_full_on_all_centers() {
        let m = make_icosphere(1).unwrap();
        let n = one_ring(&m);
        let all: Vec<usize> = (0..m.vertex_count()).collect();
        let (plan, rows) = LossPlan::around(&n, None, &all).unwrap();
        assert_eq!(rows, all);
        assert_eq!(plan, LossPlan::full(&n, None).unwrap());
        let (small, rows) = LossPlan::around(&n, None, &[0]).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(small.rows(), 6);
    }
}
