//! Central-difference gradient checks.

use rand::seq::index::sample;
use rand::Rng;

/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Compares `analytic[i]` with `(f(x + h e_i) - f(x - h e_i)) / 2h` for every
/// `i` in `indices`.
pub fn check_gradients(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    indices: &[usize],
    h: f64,
) -> GradCheckReport {
    let mut worst: f64 = 0.0;
    let mut p = x.to_vec();
    for &i in indices {
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    GradCheckReport {
        max_rel_error: worst,
        checked: indices.len(),
    }
}

/// Up to `count` distinct indices below `len`, sorted.
pub fn sample_indices<R: Rng + ?Sized>(len: usize, count: usize, rng: &mut R) -> Vec<usize> {
    let mut v = sample(rng, len, count.min(len)).into_vec();
    v.sort_unstable();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes_and_wrong_gradient_fails() {
        let x = [0.5, -1.5, 2.0];
        let good: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let mut f = |p: &[f64]| p.iter().map(|v| v * v).sum::<f64>();
        let rep = check_gradients(&mut f, &x, &good, &[0, 1, 2], 1e-5);
        assert!(rep.max_rel_error < 1e-8);
        let bad = [1.0, -3.0, 4.5];
        assert!(check_gradients(&mut f, &x, &bad, &[0, 1, 2], 1e-5).max_rel_error > 0.1);
    }
}
