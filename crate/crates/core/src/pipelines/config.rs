use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SisError};
use crate::models::{FitConfig, LossConfig, LATENT_WIDTH};
use crate::nn::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Reconstruction,
    Superres,
    Fit,
    Bci,
}

/// Settings shared by every pipeline; unknown JSON keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub epochs: usize,
    /// Meshes per optimizer step.
    pub batch: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub gamma: f64,
    pub sample_points: usize,
    pub seed: u64,
    #[serde(alias = "L")]
    pub encoding_l: usize,
    pub latent: usize,
    /// Laplacian centres drawn per mesh and step; every centre and its
    /// one-ring are decoded. `None` decodes all template vertices.
    pub query_centers: Option<usize>,
    /// Standard deviation of Gaussian noise on encoder inputs, in model
    /// units.
    pub noise_sigma: f64,
    pub exclude_filled: bool,
    pub surface_uniform: bool,
    /// Epochs between validation passes; the last epoch is always scored.
    pub val_every: usize,
    /// Input sizes used when reporting super-resolution error.
    pub eval_points: Vec<usize>,
    /// Steps between learning-rate decays when fitting one mesh.
    pub fit_steps: usize,
    pub fit_steps_per_epoch: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::Superres,
            epochs: 200,
            batch: 64,
            lr: 1e-3,
            lr_decay: 0.98,
            weight_decay: 1e-5,
            gamma: 0.05,
            sample_points: 1000,
            seed: 0,
            encoding_l: 10,
            latent: LATENT_WIDTH,
            query_centers: None,
            noise_sigma: 0.0,
            exclude_filled: true,
            surface_uniform: false,
            val_every: 10,
            eval_points: vec![500, 1000, 1500],
            fit_steps: 2000,
            fit_steps_per_epoch: 20,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| SisError::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SisError::Config(m.into()));
        if self.epochs == 0
            || self.batch == 0
            || self.val_every == 0
            || self.fit_steps_per_epoch == 0
        {
            return bad("epochs, batch, val_every and fit_steps_per_epoch must be positive");
        }
        if !(self.lr > 0.0)
            || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0)
            || !(self.weight_decay >= 0.0)
        {
            return bad("lr must be positive, lr_decay in (0, 1], weight_decay non-negative");
        }
        if !(self.gamma >= 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("gamma and noise_sigma must be non-negative");
        }
        if self.sample_points < 4 || self.eval_points.iter().any(|&p| p < 4) {
            return bad("at least 4 sample points are needed");
        }
        if self.encoding_l == 0 {
            return bad("encoding_l must be positive");
        }
        if self.latent != LATENT_WIDTH {
            return Err(SisError::Config(format!(
                "latent width is fixed at {LATENT_WIDTH}"
            )));
        }
        if self.surface_uniform {
            return bad("surface_uniform sampling is not supported; vertices are sampled");
        }
        if self.query_centers == Some(0) {
            return bad("query_centers must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            decay: self.lr_decay,
            ..AdamConfig::default()
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            gamma: self.gamma,
            exclude_filled: self.exclude_filled,
        }
    }

    pub fn fit(&self) -> FitConfig {
        FitConfig {
            steps: self.fit_steps,
            steps_per_epoch: self.fit_steps_per_epoch,
            adam: self.adam(),
            gamma: self.gamma,
            encoding_l: self.encoding_l,
            seed: self.seed,
        }
    }
}
