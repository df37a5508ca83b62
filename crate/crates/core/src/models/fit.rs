//! Fitting one decoder to one parameterized mesh.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::LossPlan;
use super::sis::{decoder_dims, flatten, DECODER_SKIP};
use crate::error::{Result, SisError};
use crate::mesh::{one_ring, Mesh, Standardizer};
use crate::nn::{AdamConfig, AdamState, FourierEncoding, Mlp};
use crate::sphere_param::{SphericalCoord, SphericalEmbedding};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub steps: usize,
    /// Steps between learning-rate decays.
    pub steps_per_epoch: usize,
    pub adam: AdamConfig,
    pub gamma: f64,
    pub encoding_l: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            steps: 2000,
            steps_per_epoch: 20,
            adam: AdamConfig::default(),
            gamma: 0.05,
            encoding_l: 10,
            seed: 0,
        }
    }
}

/// A decoder fitted to a single mesh, with its normalisation.
#[derive(Debug, Clone)]
pub struct FittedMesh {
    pub decoder: Mlp<f32>,
    pub standardizer: Standardizer,
    pub encoding: FourierEncoding,
    /// Total loss before each step.
    pub losses: Vec<f64>,
}

impl FittedMesh {
    /// Decoded positions in the mesh's own units.
    pub fn predict(&self, coords: &[SphericalCoord]) -> Result<Vec<Vec3>> {
        let x = encode_all(coords, &self.encoding);
        let out = self.decoder.predict(&x, coords.len())?;
        Ok(out
            .chunks_exact(3)
            .map(|r| {
                self.standardizer
                    .invert(&Vec3::new(r[0] as f64, r[1] as f64, r[2] as f64))
            })
            .collect())
    }
}

fn encode_all(coords: &[SphericalCoord], enc: &FourierEncoding) -> Vec<f32> {
    let mut x = vec![0.0f32; coords.len() * enc.width()];
    for (c, row) in coords.iter().zip(x.chunks_exact_mut(enc.width())) {
        enc.encode_into(c, row);
    }
    x
}

/// Trains `v_j = f(xi(c_j))` over every vertex, full batch per step.
pub fn fit_single_mesh(
    mesh: &Mesh,
    emb: &SphericalEmbedding,
    cfg: &FitConfig,
) -> Result<FittedMesh> {
    if !emb.matches(mesh) {
        return Err(SisError::Dimension(format!(
            "embedding of {} points for a mesh of {} vertices",
            emb.len(),
            mesh.vertex_count()
        )));
    }
    if cfg.steps_per_epoch == 0 {
        return Err(SisError::Config("steps_per_epoch must be positive".into()));
    }
    let standardizer = match Standardizer::fit_points([mesh.vertices()]) {
        Ok(s) => s,
        Err(SisError::ZeroVariance) => {
            let m = mesh.vertices()[0];
            Standardizer {
                mean: [m.x, m.y, m.z],
                ..Standardizer::identity()
            }
        }
        Err(e) => return Err(e),
    };
    let encoding = FourierEncoding::new(cfg.encoding_l);
    let n = mesh.vertex_count();
    let x = encode_all(&emb.coords()?, &encoding);
    let target: Vec<f32> = flatten(&standardizer.apply_all(mesh.vertices()));
    let plan = LossPlan::full(&one_ring(mesh), None)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut decoder = Mlp::<f32>::new(
        &decoder_dims(encoding.width()),
        Some(DECODER_SKIP),
        &mut rng,
    )?;
    let mut opt = AdamState::new(cfg.adam)?;
    let names = decoder.param_names("decoder/");
    let mut grads = decoder.zero_grads();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (pred, cache) = decoder
            .forward(&x, n)
            .map_err(|_| diverged(step, &losses))?;
        let mut d_out = vec![0.0f32; pred.len()];
        let value = plan.evaluate(&pred, &target, cfg.gamma, Some(&mut d_out))?;
        if !value.total.is_finite() {
            return Err(diverged(step, &losses));
        }
        losses.push(value.total);
        grads.clear();
        decoder.backward(&cache, &d_out, &mut grads, false)?;
        opt.step(decoder.tensors_mut(), &grads.tensors(), &names)?;
        if (step + 1) % cfg.steps_per_epoch == 0 {
            opt.end_epoch();
        }
    }
    Ok(FittedMesh {
        decoder,
        standardizer,
        encoding,
        losses,
    })
}

fn diverged(step: usize, losses: &[f64]) -> SisError {
    SisError::Diverged {
        epoch: step,
        last_finite: losses.len().checked_sub(1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_geom::make_icosphere;

    #[test]
    fn constant_mesh_fits_a_constant() {
        let ico = make_icosphere(1).unwrap();
        let emb = SphericalEmbedding {
            sphere_points: ico.vertices().to_vec(),
            source_mesh_id: crate::sphere_param::mesh_fingerprint(&ico),
        };
        let flat = ico
            .with_vertices(vec![Vec3::new(2.0, -1.0, 0.5); ico.vertex_count()])
            .unwrap();
        let cfg = FitConfig {
            steps: 300,
            ..Default::default()
        };
        let fit = fit_single_mesh(&flat, &emb, &cfg).unwrap();
        assert!(*fit.losses.last().unwrap() < 1e-3);
        let out = fit.predict(&emb.coords().unwrap()).unwrap();
        assert!(out
            .iter()
            .all(|p| (p - Vec3::new(2.0, -1.0, 0.5)).norm() < 1e-2));
    }

    #[test]
    fn mismatched_embedding_rejected() {
        let ico = make_icosphere(1).unwrap();
        let small = make_icosphere(0).unwrap();
        let emb = SphericalEmbedding {
            sphere_points: small.vertices().to_vec(),
            source_mesh_id: crate::sphere_param::mesh_fingerprint(&small),
        };
        assert!(fit_single_mesh(&ico, &emb, &FitConfig::default()).is_err());
    }
}
