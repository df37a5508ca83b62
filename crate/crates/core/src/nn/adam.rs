use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Result, SisError};

/// Scalar hyperparameters of [`AdamState`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Learning-rate multiplier applied at every epoch boundary.
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
            decay: 0.98,
        }
    }
}

/// Adam with bias correction, decoupled weight decay and per-epoch
/// learning-rate decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real> {
    pub config: AdamConfig,
    /// Learning rate for the next step.
    pub lr: f64,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        let ok = config.lr > 0.0
            && (0.0..1.0).contains(&config.beta1)
            && (0.0..1.0).contains(&config.beta2)
            && config.eps > 0.0
            && config.weight_decay >= 0.0
            && config.decay > 0.0;
        if !ok {
            return Err(SisError::Config(format!(
                "invalid optimizer settings {config:?}"
            )));
        }
        Ok(AdamState {
            config,
            lr: config.lr,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    /// Rebuilds a state from saved moments.
    pub fn from_parts(
        config: AdamConfig,
        lr: f64,
        step: u64,
        m: Vec<Vec<T>>,
        v: Vec<Vec<T>>,
    ) -> Result<Self> {
        let mut s = Self::new(config)?;
        if m.len() != v.len() || m.iter().zip(&v).any(|(a, b)| a.len() != b.len()) || !(lr > 0.0) {
            return Err(SisError::Checkpoint(
                "inconsistent optimizer moments".into(),
            ));
        }
        s.lr = lr;
        s.step = step;
        s.m = m;
        s.v = v;
        Ok(s)
    }

    pub fn first_moments(&self) -> &[Vec<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<T>] {
        &self.v
    }

    pub fn end_epoch(&mut self) {
        self.lr *= self.config.decay;
    }

    /// One update of every parameter tensor. `names` label the tensors in
    /// error messages.
    pub fn step(&mut self, params: Vec<&mut [T]>, grads: &[&[T]], names: &[String]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len())
        {
            return Err(SisError::Dimension(
                "parameter and gradient shapes differ".into(),
            ));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                let name = names
                    .get(i)
                    .cloned()
                    .unwrap_or_else(|| format!("tensor {i}"));
                return Err(SisError::NonFiniteGradient(name));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::ZERO; p.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len()
            || self.m.iter().zip(&params).any(|(m, p)| m.len() != p.len())
        {
            return Err(SisError::Dimension(
                "optimizer state does not match parameters".into(),
            ));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let shrink = 1.0 - self.lr * c.weight_decay;
        for (k, p) in params.into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], grads[k]);
            for i in 0..p.len() {
                let gi = g[i].to_f64();
                let mi = c.beta1 * m[i].to_f64() + (1.0 - c.beta1) * gi;
                let vi = c.beta2 * v[i].to_f64() + (1.0 - c.beta2) * gi * gi;
                m[i] = T::from_f64(mi);
                v[i] = T::from_f64(vi);
                let delta = self.lr * (mi / bc1) / ((vi / bc2).sqrt() + c.eps);
                p[i] = T::from_f64(p[i].to_f64() * shrink - delta);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut s = AdamState::<f64>::new(AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        })
        .unwrap();
        let mut p = vec![1.0, -2.0, 3.0];
        s.step(vec![&mut p], &[&[0.0; 3]], &names(1)).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut s = AdamState::<f64>::new(cfg).unwrap();
        let mut p = vec![0.0];
        s.step(vec![&mut p], &[&[1.0]], &names(1)).unwrap();
        // m_hat = v_hat = 1 after bias correction.
        assert!((p[0] + cfg.lr / (1.0 + cfg.eps)).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_shrinks_before_update() {
        let cfg = AdamConfig {
            weight_decay: 0.5,
            lr: 0.1,
            ..Default::default()
        };
        let mut s = AdamState::<f64>::new(cfg).unwrap();
        let mut p = vec![2.0];
        s.step(vec![&mut p], &[&[0.0]], &names(1)).unwrap();
        assert!((p[0] - 2.0 * (1.0 - 0.1 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn epoch_decay() {
        let mut s = AdamState::<f32>::new(AdamConfig::default()).unwrap();
        s.end_epoch();
        assert!((s.lr - 0.98e-3).abs() < 1e-18);
        s.end_epoch();
        assert!((s.lr - 0.98 * 0.98e-3).abs() < 1e-18);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = AdamState::<f64>::new(AdamConfig::default()).unwrap();
        let (mut a, mut b) = (vec![0.0], vec![0.0]);
        let err = s
            .step(vec![&mut a, &mut b], &[&[1.0], &[f64::NAN]], &names(2))
            .unwrap_err();
        assert!(matches!(err, SisError::NonFiniteGradient(ref n) if n == "p1"));
        assert_eq!(s.step, 0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut s = AdamState::<f64>::new(AdamConfig {
            lr: 0.05,
            weight_decay: 0.0,
            ..Default::default()
        })
        .unwrap();
        let mut p = vec![3.0, -2.0];
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|v| 2.0 * (v - 1.0)).collect();
            s.step(vec![&mut p], &[&g], &names(1)).unwrap();
        }
        assert!(p.iter().all(|v| (v - 1.0).abs() < 1e-3));
    }
}
