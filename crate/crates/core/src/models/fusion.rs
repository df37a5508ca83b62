//! Local feature fields: per-sample features blended over a spherical
//! triangulation, and the fused decoder feature built from them.

use crate::error::{Result, SisError};
use crate::nn::{FourierEncoding, Mlp, MlpCache, MlpGrads, Real};
use crate::sphere_geom::SphericalTriangulation;
use crate::sphere_param::{from_spherical_coords, SphericalCoord};
use crate::Vec3;

/// Per-sample features aligned with the points of `tri`.
#[derive(Debug, Clone)]
pub struct LocalFeatureField<T: Real = f32> {
    pub width: usize,
    /// Row-major `n x width`.
    pub features: Vec<T>,
    pub tri: SphericalTriangulation,
}

/// Blended feature at one coordinate with the corner data it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseFeature<T: Real = f32> {
    pub z_hat: Vec<T>,
    pub lambdas: [f64; 3],
    /// Sample indices of the containing face's corners.
    pub corners: [usize; 3],
    pub corner_features: [Vec<T>; 3],
}

/// `[z_hat, z_hat - z1, z_hat - z2, z_hat - z3, lambda]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature<T: Real = f32> {
    pub z_l: Vec<T>,
}

/// Containing face corners and barycentric weights of one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Located {
    pub corners: [usize; 3],
    pub lambdas: [f64; 3],
}

pub fn fused_width(feature_width: usize) -> usize {
    4 * feature_width + 3
}

/// Input rows for the local encoder: standardized position then the
/// Fourier encoding of the sample's coordinate.
pub fn local_encoder_input<T: Real>(
    xyz: &[Vec3],
    coords: &[SphericalCoord],
    enc: &FourierEncoding,
) -> Result<Vec<T>> {
    if xyz.len() != coords.len() {
        return Err(SisError::Dimension(format!(
            "{} positions for {} coordinates",
            xyz.len(),
            coords.len()
        )));
    }
    let w = 3 + enc.width();
    let mut x = vec![T::ZERO; xyz.len() * w];
    for (i, (p, c)) in xyz.iter().zip(coords).enumerate() {
        let row = &mut x[i * w..(i + 1) * w];
        for d in 0..3 {
            row[d] = T::from_f64(p[d]);
        }
        enc.encode_into(c, &mut row[3..]);
    }
    Ok(x)
}

/// Runs the local encoder over every sample.
pub fn encode_local_features<T: Real>(
    encoder: &Mlp<T>,
    xyz: &[Vec3],
    coords: &[SphericalCoord],
    tri: SphericalTriangulation,
    enc: &FourierEncoding,
) -> Result<LocalFeatureField<T>> {
    if tri.points().len() != xyz.len() {
        return Err(SisError::Dimension(format!(
            "triangulation has {} points for {} samples",
            tri.points().len(),
            xyz.len()
        )));
    }
    let x = local_encoder_input(xyz, coords, enc)?;
    let features = encoder.predict(&x, xyz.len())?;
    Ok(LocalFeatureField {
        width: encoder.output_width(),
        features,
        tri,
    })
}

impl<T: Real> LocalFeatureField<T> {
    pub fn len(&self) -> usize {
        self.tri.points().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature(&self, i: usize) -> &[T] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn locate(&self, dir: &Vec3) -> Result<Located> {
        let bc = self.tri.locate(dir)?;
        Ok(Located {
            corners: self.tri.corners(&bc),
            lambdas: bc.lambdas,
        })
    }
}

pub fn coarse_feature<T: Real>(
    field: &LocalFeatureField<T>,
    c: &SphericalCoord,
) -> Result<CoarseFeature<T>> {
    let loc = field.locate(&from_spherical_coords(c))?;
    let corner_features = loc.corners.map(|k| field.feature(k).to_vec());
    let mut z_hat = vec![T::ZERO; field.width];
    blend(
        &corner_features.each_ref().map(Vec::as_slice),
        &loc.lambdas,
        &mut z_hat,
    );
    Ok(CoarseFeature {
        z_hat,
        lambdas: loc.lambdas,
        corners: loc.corners,
        corner_features,
    })
}

fn blend<T: Real>(z: &[&[T]; 3], lambdas: &[f64; 3], out: &mut [T]) {
    let l = lambdas.map(T::from_f64);
    for (j, o) in out.iter_mut().enumerate() {
        *o = l[0] * z[0][j] + l[1] * z[1][j] + l[2] * z[2][j];
    }
}

/// Concatenates the blended feature, its differences to each corner and
/// the weights.
///
/// # Panics
/// If the four feature vectors differ in length.
pub fn fuse_feature<T: Real>(
    z_hat: &[T],
    z1: &[T],
    z2: &[T],
    z3: &[T],
    lambdas: [f64; 3],
) -> FusedFeature<T> {
    let d = z_hat.len();
    assert!(
        z1.len() == d && z2.len() == d && z3.len() == d,
        "feature widths differ"
    );
    let mut z_l = vec![T::ZERO; fused_width(d)];
    fuse_into(z_hat, [z1, z2, z3], &lambdas, &mut z_l);
    FusedFeature { z_l }
}

fn fuse_into<T: Real>(z_hat: &[T], z: [&[T]; 3], lambdas: &[f64; 3], out: &mut [T]) {
    let d = z_hat.len();
    out[..d].copy_from_slice(z_hat);
    for k in 0..3 {
        let block = &mut out[(k + 1) * d..(k + 2) * d];
        for j in 0..d {
            block[j] = z_hat[j] - z[k][j];
        }
    }
    for k in 0..3 {
        out[4 * d + k] = T::from_f64(lambdas[k]);
    }
}

/// Batched decoder input: one row per query holding the fused (or, with
/// `fuse == false`, only the blended) feature followed by `suffix` row `r`.
pub fn decoder_rows<T: Real>(
    field: &LocalFeatureField<T>,
    located: &[Located],
    fuse: bool,
    suffix: &[T],
    suffix_width: usize,
) -> Vec<T> {
    let d = field.width;
    let fw = if fuse { fused_width(d) } else { d };
    let w = fw + suffix_width;
    let mut x = vec![T::ZERO; located.len() * w];
    let mut z_hat = vec![T::ZERO; d];
    for (r, loc) in located.iter().enumerate() {
        let z = loc.corners.map(|k| field.feature(k));
        blend(&z, &loc.lambdas, &mut z_hat);
        let row = &mut x[r * w..(r + 1) * w];
        if fuse {
            fuse_into(&z_hat, z, &loc.lambdas, &mut row[..fw]);
        } else {
            row[..d].copy_from_slice(&z_hat);
        }
        row[fw..].copy_from_slice(&suffix[r * suffix_width..(r + 1) * suffix_width]);
    }
    x
}

/// Adds the gradient of [`decoder_rows`] with respect to the sample
/// features into `d_features` (`n x width`). The weights and face choice
/// are constants.
pub fn decoder_rows_backward<T: Real>(
    width: usize,
    located: &[Located],
    fuse: bool,
    d_rows: &[T],
    row_width: usize,
    d_features: &mut [T],
) {
    let d = width;
    let mut d_hat = vec![T::ZERO; d];
    for (r, loc) in located.iter().enumerate() {
        let g = &d_rows[r * row_width..(r + 1) * row_width];
        // z_hat feeds its own block and all three difference blocks.
        for j in 0..d {
            d_hat[j] = if fuse {
                g[j] + g[d + j] + g[2 * d + j] + g[3 * d + j]
            } else {
                g[j]
            };
        }
        for k in 0..3 {
            let lk = T::from_f64(loc.lambdas[k]);
            let dz = &mut d_features[loc.corners[k] * d..(loc.corners[k] + 1) * d];
            for j in 0..d {
                dz[j] += lk * d_hat[j];
                if fuse {
                    dz[j] -= g[(k + 1) * d + j];
                }
            }
        }
    }
}

/// Encoder activations for a sample set, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LocalForward<T: Real> {
    pub field: LocalFeatureField<T>,
    pub cache: MlpCache<T>,
}

/// [`encode_local_features`] keeping the encoder cache.
pub fn encode_local_features_train<T: Real>(
    encoder: &Mlp<T>,
    x: &[T],
    tri: SphericalTriangulation,
) -> Result<LocalForward<T>> {
    let n = tri.points().len();
    let (features, cache) = encoder.forward(x, n)?;
    Ok(LocalForward {
        field: LocalFeatureField {
            width: encoder.output_width(),
            features,
            tri,
        },
        cache,
    })
}

pub fn local_backward<T: Real>(
    encoder: &Mlp<T>,
    fwd: &LocalForward<T>,
    d_features: &[T],
    grads: &mut MlpGrads<T>,
) -> Result<()> {
    encoder.backward(&fwd.cache, d_features, grads, false)?;
    Ok(())
}
