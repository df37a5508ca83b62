use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SisError};
use crate::Vec3;

/// Normalised inclination and azimuth of a unit-sphere point, both in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoord {
    pub theta_hat: f64,
    pub phi_hat: f64,
}

impl SphericalCoord {
    pub fn new(theta_hat: f64, phi_hat: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta_hat) || !(0.0..=1.0).contains(&phi_hat) {
            return Err(SisError::Config(format!(
                "spherical coordinate ({theta_hat}, {phi_hat}) outside [0,1]^2"
            )));
        }
        Ok(SphericalCoord { theta_hat, phi_hat })
    }
}

/// theta = atan2(sqrt(x^2 + y^2), z), phi = atan2(y, x), normalised as
/// theta / pi and phi / (2 pi) + 0.5. At the poles phi_hat is 0.5.
pub fn to_spherical_coords(p: &Vec3) -> Result<SphericalCoord> {
    let n = p.norm();
    if !((n - 1.0).abs() <= 1e-6) {
        return Err(SisError::NotUnit(n));
    }
    let rho = p.x.hypot(p.y);
    let theta = rho.atan2(p.z);
    let phi = if rho == 0.0 { 0.0 } else { p.y.atan2(p.x) };
    Ok(SphericalCoord {
        theta_hat: (theta / PI).clamp(0.0, 1.0),
        phi_hat: (phi / (2.0 * PI) + 0.5).clamp(0.0, 1.0),
    })
}

pub fn from_spherical_coords(c: &SphericalCoord) -> Vec3 {
    let theta = c.theta_hat * PI;
    let phi = (c.phi_hat - 0.5) * 2.0 * PI;
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(cp * st, sp * st, ct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(c: SphericalCoord, t: f64, p: f64) -> bool {
        (c.theta_hat - t).abs() < 1e-12 && (c.phi_hat - p).abs() < 1e-12
    }

    #[test]
    fn reference_points() {
        assert!(close(to_spherical_coords(&Vec3::z()).unwrap(), 0.0, 0.5));
        assert!(close(to_spherical_coords(&Vec3::x()).unwrap(), 0.5, 0.5));
        assert!(close(to_spherical_coords(&Vec3::y()).unwrap(), 0.5, 0.75));
        assert!(close(to_spherical_coords(&-Vec3::z()).unwrap(), 1.0, 0.5));
    }

    #[test]
    fn non_unit_rejected() {
        assert!(matches!(
            to_spherical_coords(&Vec3::new(2.0, 0.0, 0.0)),
            Err(SisError::NotUnit(_))
        ));
    }

    #[test]
    fn inverse_reference_points() {
        let p = from_spherical_coords(&SphericalCoord::new(0.5, 0.5).unwrap());
        assert!((p - Vec3::x()).norm() < 1e-15);
        for phi_hat in [0.0, 0.3, 1.0] {
            let p = from_spherical_coords(&SphericalCoord::new(0.0, phi_hat).unwrap());
            assert!((p - Vec3::z()).norm() < 1e-15);
        }
        // theta = pi/4, phi = -pi/2 evaluated in closed form.
        let p = from_spherical_coords(&SphericalCoord::new(0.25, 0.25).unwrap());
        let s = (PI / 4.0).sin();
        let expected = Vec3::new(
            (-PI / 2.0).cos() * s,
            (-PI / 2.0).sin() * s,
            (PI / 4.0).cos(),
        );
        assert!((p - expected).norm() < 1e-15);
        assert!((p - Vec3::new(0.0, -s, s)).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn round_trip_away_from_poles(t in 1e-6f64..(1.0 - 1e-6), p in 0.0f64..1.0) {
            let c = SphericalCoord::new(t, p).unwrap();
            let back = to_spherical_coords(&from_spherical_coords(&c)).unwrap();
            prop_assert!((back.theta_hat - t).abs() < 1e-9);
            // phi_hat = 0 and 1 describe the same meridian.
            let dp = (back.phi_hat - p).abs();
            prop_assert!(dp < 1e-9 || (dp - 1.0).abs() < 1e-9);
        }
    }
}
