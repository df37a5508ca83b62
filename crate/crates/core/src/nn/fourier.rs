use serde::{Deserialize, Serialize};

use super::Real;
use crate::sphere_param::SphericalCoord;

/// Sinusoidal encoding of a spherical coordinate with `l` octaves per
/// scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourierEncoding {
    pub l: usize,
}

impl Default for FourierEncoding {
    fn default() -> Self {
        FourierEncoding { l: 10 }
    }
}

/// sin(pi t) and cos(pi t), exact when 2t is an integer.
fn sin_cos_pi(t: f64) -> (f64, f64) {
    let r = t - 2.0 * (t / 2.0).floor();
    let twice = 2.0 * r;
    if twice == twice.round() {
        return match twice as i64 {
            0 | 4 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        };
    }
    (r * std::f64::consts::PI).sin_cos()
}

impl FourierEncoding {
    pub fn new(l: usize) -> Self {
        FourierEncoding { l }
    }

    /// Encoded width for one coordinate pair.
    pub fn width(&self) -> usize {
        4 * self.l
    }

    /// Writes `[sin(2^k pi p), cos(2^k pi p)]` for k < l, theta block first.
    pub fn encode_into<T: Real>(&self, c: &SphericalCoord, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.width());
        let half = 2 * self.l;
        for (block, p) in [c.theta_hat, c.phi_hat].into_iter().enumerate() {
            let mut scale = 1.0;
            for k in 0..self.l {
                let (s, co) = sin_cos_pi(scale * p);
                out[block * half + 2 * k] = T::from_f64(s);
                out[block * half + 2 * k + 1] = T::from_f64(co);
                scale *= 2.0;
            }
        }
    }
}

pub fn fourier_encode(c: &SphericalCoord, enc: &FourierEncoding) -> Vec<f64> {
    let mut out = vec![0.0; enc.width()];
    enc.encode_into(c, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn origin_encodes_to_sin_zero_cos_one() {
        let e = fourier_encode(
            &SphericalCoord::new(0.0, 0.0).unwrap(),
            &FourierEncoding::default(),
        );
        assert_eq!(e.len(), 40);
        for pair in e.chunks(2) {
            assert_eq!(pair, [0.0, 1.0]);
        }
    }

    #[test]
    fn half_theta_two_octaves() {
        let e = fourier_encode(
            &SphericalCoord::new(0.5, 0.0).unwrap(),
            &FourierEncoding::new(2),
        );
        assert_eq!(&e[..4], &[1.0, 0.0, 0.0, -1.0]);
    }

    proptest! {
        #[test]
        fn matches_direct_evaluation(t in 0.0f64..=1.0, p in 0.0f64..=1.0) {
            let e = fourier_encode(&SphericalCoord::new(t, p).unwrap(), &FourierEncoding::default());
            prop_assert_eq!(e.len(), 40);
            for (b, x) in [t, p].into_iter().enumerate() {
                for k in 0..10 {
                    let a = 2f64.powi(k as i32) * PI * x;
                    prop_assert!((e[20 * b + 2 * k] - a.sin()).abs() < 1e-9);
                    prop_assert!((e[20 * b + 2 * k + 1] - a.cos()).abs() < 1e-9);
                }
            }
            prop_assert!(e.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
