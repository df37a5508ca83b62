//! Training loops for the reconstruction and super-resolution tasks.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::dataset::{part_budgets, sample_part, stream_rng, Dataset};
use super::metrics::{evaluate_on, MetricsReport};
use crate::error::{Result, SisError};
use crate::models::{LossPlan, LossValue, ModelKind, PartQuery, PartTemplate, SisGrads, SisModel};
use crate::nn::{save_checkpoint, AdamState, FourierEncoding};
use crate::Vec3;

pub const CHECKPOINT_FILE: &str = "model.sis";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_rec: f64,
    pub train_lap: f64,
    /// Validation error (mean per-vertex distance) when scored.
    pub val_error: Option<f64>,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: SisModel,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub checkpoint: Option<PathBuf>,
}

/// Global conditioning, supervised at template coordinates.
pub fn train_reconstruction(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    train_model(ds, cfg, ModelKind::Global, out)
}

/// Local conditioning from `cfg.sample_points` vertices drawn afresh for
/// every mesh and epoch.
pub fn train_superres(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    train_model(ds, cfg, ModelKind::Local, out)
}

struct Plans {
    /// Per part: full-template plan, used when no centre count is set.
    full: Vec<Option<PartQuery>>,
    centers: Vec<usize>,
}

fn build_plans(parts: &[PartTemplate], cfg: &ExperimentConfig) -> Result<Plans> {
    let total: usize = parts.iter().map(PartTemplate::original_count).sum();
    let mut full = Vec::with_capacity(parts.len());
    let mut centers = Vec::with_capacity(parts.len());
    for p in parts {
        let filled = cfg.exclude_filled.then_some(p.filled.as_slice());
        match cfg.query_centers {
            Some(c) => {
                let share = (c as f64 * p.original_count() as f64 / total as f64).round() as usize;
                centers.push(share.clamp(1, p.original_count()));
                full.push(None);
            }
            None => {
                centers.push(0);
                full.push(Some(PartQuery {
                    plan: LossPlan::full(&p.nbrs, filled)?,
                    rows: (0..p.vertex_count()).collect(),
                }));
            }
        }
    }
    Ok(Plans { full, centers })
}

fn queries<R: Rng>(
    parts: &[PartTemplate],
    plans: &Plans,
    cfg: &ExperimentConfig,
    rng: &mut R,
) -> Result<Vec<PartQuery>> {
    parts
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if let Some(q) = &plans.full[k] {
                return Ok(q.clone());
            }
            let centres = sample_part(rng, p, plans.centers[k]);
            let filled = cfg.exclude_filled.then_some(p.filled.as_slice());
            let (plan, rows) = LossPlan::around(&p.nbrs, filled, &centres)?;
            Ok(PartQuery { plan, rows })
        })
        .collect()
}

struct Job<'a> {
    model: &'a SisModel,
    parts: &'a [PartTemplate],
    plans: &'a Plans,
    budgets: &'a [usize],
    cfg: &'a ExperimentConfig,
    noise: Option<Normal<f64>>,
}

impl Job<'_> {
    fn item(&self, xyz: &[Vec3], epoch: usize, mesh: usize) -> Result<(LossValue, SisGrads<f32>)> {
        let mut rng = stream_rng(self.cfg.seed, ((epoch as u64 + 1) << 32) + mesh as u64);
        let q = queries(self.parts, self.plans, self.cfg, &mut rng)?;
        let mut g = self.model.zero_grads();
        let v = if self.model.kind.is_local() {
            let mut samples = Vec::with_capacity(self.parts.len());
            let mut inputs = Vec::with_capacity(self.parts.len());
            for (p, &b) in self.parts.iter().zip(self.budgets) {
                let s = sample_part(&mut rng, p, b);
                let pos = p.gather(xyz);
                let mut inp: Vec<Vec3> = s.iter().map(|&i| pos[i]).collect();
                if let Some(n) = &self.noise {
                    for x in &mut inp {
                        *x += Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
                    }
                }
                samples.push(s);
                inputs.push(inp);
            }
            self.model.local_item_grad(
                self.parts,
                xyz,
                &samples,
                &inputs,
                &q,
                self.cfg.gamma,
                &mut g,
            )?
        } else {
            self.model
                .global_item_grad(self.parts, xyz, &q, self.cfg.gamma, &mut g)?
        };
        Ok((v, g))
    }
}

fn validate(model: &SisModel, ds: &Dataset, cfg: &ExperimentConfig) -> Result<Option<f64>> {
    let val = &ds.manifest.split.val;
    if val.is_empty() {
        return Ok(None);
    }
    let points = model.kind.is_local().then_some(cfg.sample_points);
    Ok(Some(
        evaluate_on(model, ds, val, points, cfg.seed, serde_json::Value::Null)?.mean,
    ))
}

/// Trains a model of `kind` on the training split. The returned model (and
/// checkpoint written to `out`) is the one with the lowest validation
/// error, or the lowest training loss without a validation split.
pub fn train_model(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    kind: ModelKind,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let enc = FourierEncoding::new(cfg.encoding_l);
    let parts = ds.parts(enc)?;
    let mut model = SisModel::<f32>::new(
        kind,
        parts.len(),
        ds.template.vertex_count(),
        enc,
        *ds.standardizer(),
        &mut stream_rng(cfg.seed, 0),
    )?;
    let train = &ds.manifest.split.train;
    let xyz: Vec<Vec<Vec3>> = (0..ds.meshes.len()).map(|i| ds.standardized(i)).collect();
    let budgets = if kind.is_local() {
        part_budgets(&parts, cfg.sample_points)?
    } else {
        Vec::new()
    };
    let plans = build_plans(&parts, cfg)?;
    let noise = if cfg.noise_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma).map_err(|e| SisError::Config(e.to_string()))?)
    } else {
        None
    };
    let mut opt = AdamState::<f32>::new(cfg.adam())?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, SisModel)> = None;
    let mut last_finite = None;
    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let lr = opt.lr;
        let mut order = train.clone();
        order.shuffle(&mut stream_rng(cfg.seed, 1 + epoch as u64));
        let mut sum = LossValue::default();
        for batch in order.chunks(cfg.batch) {
            let job = Job {
                model: &model,
                parts: &parts,
                plans: &plans,
                budgets: &budgets,
                cfg,
                noise,
            };
            let results = batch
                .par_iter()
                .map(|&i| job.item(&xyz[i], epoch, i))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| match e {
                    SisError::Numerical(_) | SisError::NonFiniteGradient(_) => {
                        SisError::Diverged { epoch, last_finite }
                    }
                    e => e,
                })?;
            let mut g = model.zero_grads();
            for (v, gi) in &results {
                g.accumulate(gi);
                sum.total += v.total;
                sum.rec += v.rec;
                sum.lap += v.lap;
            }
            if !sum.total.is_finite() {
                return Err(SisError::Diverged { epoch, last_finite });
            }
            g.scale(1.0 / batch.len() as f32);
            model.step(&mut opt, &g).map_err(|e| match e {
                SisError::NonFiniteGradient(_) => SisError::Diverged { epoch, last_finite },
                e => e,
            })?;
        }
        opt.end_epoch();
        model.trained = true;
        let n = train.len() as f64;
        let mut log = EpochLog {
            epoch,
            train_loss: sum.total / n,
            train_rec: sum.rec / n,
            train_lap: sum.lap / n,
            val_error: None,
            lr,
            seconds: 0.0,
        };
        if (epoch + 1) % cfg.val_every == 0 || epoch + 1 == cfg.epochs {
            log.val_error = validate(&model, ds, cfg).map_err(|e| match e {
                SisError::Numerical(_) => SisError::Diverged { epoch, last_finite },
                e => e,
            })?;
            let score = log.val_error.unwrap_or(log.train_loss);
            if best.as_ref().is_none_or(|b| score < b.1) {
                best = Some((epoch, score, model.clone()));
            }
        }
        last_finite = Some(epoch);
        log.seconds = t0.elapsed().as_secs_f64();
        info!(
            "epoch {} loss {:.6} (rec {:.6}, lap {:.6}) val {:?} lr {:.3e} {:.1}s",
            epoch, log.train_loss, log.train_rec, log.train_lap, log.val_error, lr, log.seconds
        );
        history.push(log);
    }
    let (best_epoch, best_val, model) = best.expect("at least one epoch is scored");
    let checkpoint = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| SisError::io(dir, e))?;
            let path = dir.join(CHECKPOINT_FILE);
            let extra = serde_json::json!({
                "config": cfg,
                "best_epoch": best_epoch,
                "best_val": best_val,
                "dataset": ds.root.join(super::dataset::MANIFEST_FILE),
            });
            save_checkpoint(&model.to_checkpoint(Some(opt), extra)?, &path)?;
            let hist = dir.join("history.json");
            fs::write(&hist, serde_json::to_string_pretty(&history)?)
                .map_err(|e| SisError::io(&hist, e))?;
            Some(path)
        }
        None => None,
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val,
        checkpoint,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub points: Vec<usize>,
    /// Mean test error of the fused variant at each point count.
    pub fused: Vec<f64>,
    /// Mean test error of the blended-feature variant.
    pub no_fusion: Vec<f64>,
    pub reports: Vec<MetricsReport>,
}

/// Trains the fused and the blended-feature local variants with the same
/// configuration and scores both on the same samples.
pub fn run_ablation_no_fusion(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<AblationReport> {
    let mut report = AblationReport {
        points: cfg.eval_points.clone(),
        fused: Vec::new(),
        no_fusion: Vec::new(),
        reports: Vec::new(),
    };
    for kind in [ModelKind::Local, ModelKind::LocalNoFusion] {
        let dir = out.map(|o| {
            o.join(if kind == ModelKind::Local {
                "fused"
            } else {
                "no_fusion"
            })
        });
        let trained = train_model(ds, cfg, kind, dir.as_deref())?;
        for &p in &cfg.eval_points {
            let r = super::metrics::evaluate(
                &trained.model,
                ds,
                Some(p),
                cfg.seed,
                serde_json::to_value(cfg)?,
            )?;
            if kind == ModelKind::Local {
                report.fused.push(r.mean);
            } else {
                report.no_fusion.push(r.mean);
            }
            if let Some(d) = &dir {
                r.write(d, &format!("eval_{p}"))?;
            }
            report.reports.push(r);
        }
    }
    if let Some(o) = out {
        let path = o.join("ablation.json");
        fs::write(&path, serde_json::to_string_pretty(&report)?)
            .map_err(|e| SisError::io(&path, e))?;
    }
    Ok(report)
}
