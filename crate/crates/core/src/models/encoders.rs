//! Mesh encoders: a pooled per-vertex network for the global code and a
//! per-vertex network for local features.

use rand::Rng;

use crate::error::{Result, SisError};
use crate::nn::{Mlp, MlpCache, MlpGrads, Real};

/// Channel ladder of the shared per-vertex network.
pub const GLOBAL_CHANNELS: [usize; 5] = [3, 16, 32, 64, 128];
pub const LATENT_WIDTH: usize = 64;
pub const LOCAL_HIDDEN: [usize; 2] = [128, 128];

/// Global mesh code `z_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFeature<T: Real = f32> {
    pub z_g: Vec<T>,
}

/// Shared per-vertex network, max-pool over vertices, dense projection.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalEncoder<T: Real = f32> {
    pub vertex_count: usize,
    pub point: Mlp<T>,
    pub head: Mlp<T>,
}

#[derive(Debug, Clone)]
pub struct GlobalCache<T: Real> {
    point: MlpCache<T>,
    head: MlpCache<T>,
    /// Vertex that won the max-pool, per channel.
    argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalGrads<T: Real> {
    pub point: MlpGrads<T>,
    pub head: MlpGrads<T>,
}

impl<T: Real> GlobalGrads<T> {
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut t = self.point.tensors();
        t.extend(self.head.tensors());
        t
    }
}

impl<T: Real> GlobalEncoder<T> {
    pub fn new<R: Rng + ?Sized>(vertex_count: usize, rng: &mut R) -> Result<Self> {
        if vertex_count == 0 {
            return Err(SisError::EmptyMesh);
        }
        Ok(GlobalEncoder {
            vertex_count,
            point: Mlp::new(&GLOBAL_CHANNELS, None, rng)?,
            head: Mlp::new(&[GLOBAL_CHANNELS[4], LATENT_WIDTH], None, rng)?,
        })
    }

    fn check(&self, xyz: &[T]) -> Result<()> {
        if xyz.len() != 3 * self.vertex_count {
            return Err(SisError::Dimension(format!(
                "encoder built for {} vertices, got {}",
                self.vertex_count,
                xyz.len() / 3
            )));
        }
        Ok(())
    }

    fn pool(&self, h: &[T]) -> (Vec<T>, Vec<usize>) {
        let c = self.point.output_width();
        let mut best = h[..c].to_vec();
        let mut arg = vec![0; c];
        for v in 1..self.vertex_count {
            for j in 0..c {
                let x = h[v * c + j];
                if x > best[j] {
                    best[j] = x;
                    arg[j] = v;
                }
            }
        }
        (best, arg)
    }

    /// `z_g` for standardized vertices given as a flat `n x 3` array.
    pub fn encode(&self, xyz: &[T]) -> Result<GlobalFeature<T>> {
        self.check(xyz)?;
        let h = self.point.predict(xyz, self.vertex_count)?;
        let (pooled, _) = self.pool(&h);
        Ok(GlobalFeature {
            z_g: self.head.predict(&pooled, 1)?,
        })
    }

    pub fn forward(&self, xyz: &[T]) -> Result<(GlobalFeature<T>, GlobalCache<T>)> {
        self.check(xyz)?;
        let (h, point) = self.point.forward(xyz, self.vertex_count)?;
        let (pooled, argmax) = self.pool(&h);
        let (z_g, head) = self.head.forward(&pooled, 1)?;
        Ok((
            GlobalFeature { z_g },
            GlobalCache {
                point,
                head,
                argmax,
            },
        ))
    }

    pub fn zero_grads(&self) -> GlobalGrads<T> {
        GlobalGrads {
            point: self.point.zero_grads(),
            head: self.head.zero_grads(),
        }
    }

    /// Accumulates parameter gradients for `d_z = dL/dz_g`. Only the pooled
    /// winner of each channel receives gradient.
    pub fn backward(
        &self,
        cache: &GlobalCache<T>,
        d_z: &[T],
        grads: &mut GlobalGrads<T>,
    ) -> Result<()> {
        let d_pooled = self
            .head
            .backward(&cache.head, d_z, &mut grads.head, true)?
            .expect("input gradient requested");
        let c = self.point.output_width();
        let mut d_h = vec![T::ZERO; self.vertex_count * c];
        for (j, &v) in cache.argmax.iter().enumerate() {
            d_h[v * c + j] = d_pooled[j];
        }
        self.point
            .backward(&cache.point, &d_h, &mut grads.point, false)?;
        Ok(())
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        let mut n = self.point.param_names(&format!("{prefix}point/"));
        n.extend(self.head.param_names(&format!("{prefix}head/")));
        n
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut t = self.point.tensors_mut();
        t.extend(self.head.tensors_mut());
        t
    }

    pub fn cast<U: Real>(&self) -> GlobalEncoder<U> {
        GlobalEncoder {
            vertex_count: self.vertex_count,
            point: self.point.cast(),
            head: self.head.cast(),
        }
    }
}

/// Per-vertex local encoder: `[3 + 4L, 128, 128, 64]`.
pub fn new_local_encoder<T: Real, R: Rng + ?Sized>(
    encoding_width: usize,
    rng: &mut R,
) -> Result<Mlp<T>> {
    Mlp::new(
        &[
            3 + encoding_width,
            LOCAL_HIDDEN[0],
            LOCAL_HIDDEN[1],
            LATENT_WIDTH,
        ],
        None,
        rng,
    )
}
