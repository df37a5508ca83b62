use serde::{Deserialize, Serialize};

use super::Mesh;
use crate::error::{Result, SisError};
use crate::Vec3;

/// Corpus-wide affine normalisation: subtract one mean, divide by one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; 3],
    pub std: f64,
    /// Millimetres per model unit (1.0 when unknown).
    pub unit_scale: f64,
}

impl Standardizer {
    pub fn identity() -> Self {
        Standardizer {
            mean: [0.0; 3],
            std: 1.0,
            unit_scale: 1.0,
        }
    }

    /// Fits the mean and scalar standard deviation over every vertex of
    /// every vertex array.
    pub fn fit_points<'a, I>(sets: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [Vec3]> + Clone,
    {
        let mut sum = Vec3::zeros();
        let mut count = 0usize;
        for s in sets.clone() {
            for p in s {
                sum += p;
            }
            count += s.len();
        }
        if count == 0 {
            return Err(SisError::EmptyMesh);
        }
        let mean = sum / count as f64;
        let mut sq = 0.0;
        for s in sets {
            for p in s {
                sq += (p - mean).norm_squared();
            }
        }
        let std = (sq / (3 * count) as f64).sqrt();
        if !(std > 1e-12 * (1.0 + mean.amax())) {
            return Err(SisError::ZeroVariance);
        }
        Ok(Standardizer {
            mean: [mean.x, mean.y, mean.z],
            std,
            unit_scale: 1.0,
        })
    }

    pub fn with_unit_scale(mut self, unit_scale: f64) -> Self {
        self.unit_scale = unit_scale;
        self
    }

    fn mean_vec(&self) -> Vec3 {
        Vec3::new(self.mean[0], self.mean[1], self.mean[2])
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - self.mean_vec()) / self.std
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p * self.std + self.mean_vec()
    }

    pub fn apply_all(&self, ps: &[Vec3]) -> Vec<Vec3> {
        ps.iter().map(|p| self.apply(p)).collect()
    }

    pub fn invert_all(&self, ps: &[Vec3]) -> Vec<Vec3> {
        ps.iter().map(|p| self.invert(p)).collect()
    }
}

pub fn fit_standardizer(meshes: &[Mesh]) -> Result<Standardizer> {
    if meshes.is_empty() {
        return Err(SisError::EmptyMesh);
    }
    Standardizer::fit_points(meshes.iter().map(|m| m.vertices()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_geom::make_icosphere;

    #[test]
    fn centered_sphere_has_zero_mean() {
        let m = make_icosphere(3).unwrap();
        let s = fit_standardizer(std::slice::from_ref(&m)).unwrap();
        assert!(s.mean.iter().all(|c| c.abs() < 1e-12));
        let p = m.vertices()[5];
        assert!((s.apply(&p) - p / s.std).norm() < 1e-15);
    }

    #[test]
    fn already_standardized_is_fixed_point() {
        let m = make_icosphere(3).unwrap();
        let s = fit_standardizer(std::slice::from_ref(&m)).unwrap();
        let std_m = m.with_vertices(s.apply_all(m.vertices())).unwrap();
        let s2 = fit_standardizer(&[std_m]).unwrap();
        assert!(s2.mean.iter().all(|c| c.abs() < 1e-12));
        assert!((s2.std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn translated_copies_mean_is_midpoint() {
        let m = make_icosphere(2).unwrap();
        let a = Vec3::new(1.0, 2.0, 3.0);
        let b = Vec3::new(-3.0, 0.5, 1.0);
        let ma = m
            .with_vertices(m.vertices().iter().map(|p| p + a).collect())
            .unwrap();
        let mb = m
            .with_vertices(m.vertices().iter().map(|p| p + b).collect())
            .unwrap();
        let s = fit_standardizer(&[ma, mb]).unwrap();
        let mid = (a + b) / 2.0;
        for k in 0..3 {
            assert!((s.mean[k] - mid[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_rejected() {
        let m = Mesh::new(vec![Vec3::new(1.0, 1.0, 1.0); 3], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(
            fit_standardizer(&[m]),
            Err(SisError::ZeroVariance)
        ));
    }

    #[test]
    fn apply_invert_identity() {
        let m = make_icosphere(2).unwrap();
        let s = Standardizer {
            mean: [0.3, -1.0, 2.0],
            std: 0.7,
            unit_scale: 1.0,
        };
        for p in m.vertices() {
            assert!((s.invert(&s.apply(p)) - p).norm() < 1e-12);
        }
        let _ = fit_standardizer(&[m]).unwrap();
    }
}
