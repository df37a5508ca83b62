//! Error reports, evaluation of trained models and the barycentric
//! baseline.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{part_budgets, sample_part, stream_rng, Dataset};
use crate::error::{Result, SisError};
use crate::models::{ModelKind, PartTemplate, SisModel};
use crate::sphere_geom::{bci_interpolate, triangulate_unit_points};
use crate::Vec3;

/// Stream offset separating evaluation draws from training draws.
const EVAL_STREAM: u64 = 1 << 62;

pub const METRIC_NAME: &str = "mean per-vertex Euclidean distance";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshError {
    pub index: usize,
    pub path: String,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub metric: String,
    pub unit: String,
    pub points: Option<usize>,
    pub per_mesh: Vec<MeshError>,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub runtime_seconds: f64,
    pub config: serde_json::Value,
}

impl MetricsReport {
    pub fn new(
        label: &str,
        per_mesh: Vec<MeshError>,
        unit_scale: f64,
        points: Option<usize>,
        runtime_seconds: f64,
        config: serde_json::Value,
    ) -> Self {
        let mut e: Vec<f64> = per_mesh.iter().map(|m| m.error).collect();
        e.sort_by(f64::total_cmp);
        let median = match e.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => e[n / 2],
            n => 0.5 * (e[n / 2 - 1] + e[n / 2]),
        };
        MetricsReport {
            label: label.into(),
            metric: METRIC_NAME.into(),
            unit: if unit_scale == 1.0 {
                "model units".into()
            } else {
                "mm".into()
            },
            points,
            mean: if e.is_empty() {
                f64::NAN
            } else {
                e.iter().sum::<f64>() / e.len() as f64
            },
            median,
            max: e.last().copied().unwrap_or(f64::NAN),
            per_mesh,
            runtime_seconds,
            config,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        for m in &self.per_mesh {
            w.serialize(m).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| SisError::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| SisError::io(path, e))
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| SisError::io(dir, e))?;
        self.write_csv(&dir.join(format!("{stem}.csv")))?;
        self.write_json(&dir.join(format!("{stem}.json")))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> SisError {
    SisError::io(path, std::io::Error::other(e.to_string()))
}

/// Mean Euclidean distance between corresponding vertices, times
/// `unit_scale`.
pub fn mean_vertex_error(pred: &[Vec3], truth: &[Vec3], unit_scale: f64) -> Result<f64> {
    if pred.len() != truth.len() || truth.is_empty() {
        return Err(SisError::Dimension(format!(
            "{} predicted vertices for {} ground-truth vertices",
            pred.len(),
            truth.len()
        )));
    }
    let s: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b).norm()).sum();
    Ok(unit_scale * s / truth.len() as f64)
}

/// Input vertices for one evaluation of mesh `mesh_index`, shared by every
/// method scored on it.
pub fn eval_samples(
    parts: &[PartTemplate],
    mesh_index: usize,
    points: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let budgets = part_budgets(parts, points)?;
    let mut rng = stream_rng(
        seed,
        EVAL_STREAM + ((points as u64) << 32) + mesh_index as u64,
    );
    Ok(parts
        .iter()
        .zip(budgets)
        .map(|(p, b)| sample_part(&mut rng, p, b))
        .collect())
}

fn scatter(parts: &[PartTemplate], per_part: Vec<Vec<Vec3>>, n: usize) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); n];
    for (part, values) in parts.iter().zip(per_part) {
        for (local, &orig) in part.index_map.iter().enumerate() {
            out[orig] = values[local];
        }
    }
    out
}

/// Raw-unit prediction of every original vertex of `raw`. Local models
/// read only the vertices listed in `samples`.
pub fn predict_template(
    model: &SisModel,
    parts: &[PartTemplate],
    raw: &[Vec3],
    samples: Option<&[Vec<usize>]>,
) -> Result<Vec<Vec3>> {
    let st = &model.standardizer;
    let xyz = st.apply_all(raw);
    let mut per_part = Vec::with_capacity(parts.len());
    match model.kind {
        ModelKind::Global => {
            let z = model.encode_global(&xyz)?;
            for (k, part) in parts.iter().enumerate() {
                per_part.push(model.decode_global(k, &z, &part.coords)?);
            }
        }
        _ => {
            let samples = samples
                .ok_or_else(|| SisError::Config("local models need input samples".into()))?;
            for (k, part) in parts.iter().enumerate() {
                let pos = part.gather(&xyz);
                let s = &samples[k];
                let inputs: Vec<Vec3> = s.iter().map(|&i| pos[i]).collect();
                let pts: Vec<Vec3> = s.iter().map(|&i| part.points[i]).collect();
                let field = model.local_field(&inputs, &pts)?;
                per_part.push(model.decode_local_at(k, &field, &part.points, &part.coords)?);
            }
        }
    }
    let per_part = per_part.into_iter().map(|v| st.invert_all(&v)).collect();
    Ok(scatter(parts, per_part, raw.len()))
}

/// Barycentric interpolation of the sampled raw positions at every
/// original vertex.
pub fn bci_template(
    parts: &[PartTemplate],
    raw: &[Vec3],
    samples: &[Vec<usize>],
) -> Result<Vec<Vec3>> {
    let mut per_part = Vec::with_capacity(parts.len());
    for (part, s) in parts.iter().zip(samples) {
        let pos = part.gather(raw);
        let tri = triangulate_unit_points(&s.iter().map(|&i| part.points[i]).collect::<Vec<_>>())?;
        let values: Vec<Vec3> = s.iter().map(|&i| pos[i]).collect();
        per_part.push(
            part.points
                .iter()
                .map(|d| bci_interpolate(&tri, &values, d))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(scatter(parts, per_part, raw.len()))
}

fn score<F>(ds: &Dataset, ids: &[usize], f: F) -> Result<Vec<MeshError>>
where
    F: Fn(usize) -> Result<Vec<Vec3>> + Sync,
{
    let unit = ds.standardizer().unit_scale;
    ids.par_iter()
        .map(|&i| {
            let pred = f(i)?;
            Ok(MeshError {
                index: i,
                path: ds.manifest.entries[i].path.clone(),
                error: mean_vertex_error(&pred, &ds.meshes[i], unit)?,
            })
        })
        .collect()
}

/// Scores `model` on the meshes `ids`. Local models read `points` sampled
/// vertices per mesh.
pub fn evaluate_on(
    model: &SisModel,
    ds: &Dataset,
    ids: &[usize],
    points: Option<usize>,
    seed: u64,
    config: serde_json::Value,
) -> Result<MetricsReport> {
    let t0 = Instant::now();
    let parts = ds.parts(model.encoding)?;
    if parts.len() != model.parts() {
        return Err(SisError::Dimension(format!(
            "model has {} decoders, template has {} parts",
            model.parts(),
            parts.len()
        )));
    }
    if model.kind.is_local() && points.is_none() {
        return Err(SisError::Config(
            "local models are evaluated with a point count".into(),
        ));
    }
    let per_mesh = score(ds, ids, |i| {
        let samples = points
            .map(|p| eval_samples(&parts, i, p, seed))
            .transpose()?;
        predict_template(model, &parts, &ds.meshes[i], samples.as_deref())
    })?;
    let label = match model.kind {
        ModelKind::Global => "sis-global",
        ModelKind::Local => "sis-local",
        ModelKind::LocalNoFusion => "sis-local-no-fusion",
    };
    Ok(MetricsReport::new(
        label,
        per_mesh,
        ds.standardizer().unit_scale,
        points.filter(|_| model.kind.is_local()),
        t0.elapsed().as_secs_f64(),
        config,
    ))
}

/// [`evaluate_on`] over the test split.
pub fn evaluate(
    model: &SisModel,
    ds: &Dataset,
    points: Option<usize>,
    seed: u64,
    config: serde_json::Value,
) -> Result<MetricsReport> {
    evaluate_on(model, ds, &ds.manifest.split.test, points, seed, config)
}

/// Barycentric interpolation from `points` sampled vertices, scored on the
/// test split with the same samples [`evaluate`] uses.
pub fn run_bci_baseline(ds: &Dataset, points: usize, seed: u64) -> Result<MetricsReport> {
    let t0 = Instant::now();
    let parts = ds.parts(Default::default())?;
    let per_mesh = score(ds, &ds.manifest.split.test, |i| {
        let samples = eval_samples(&parts, i, points, seed)?;
        bci_template(&parts, &ds.meshes[i], &samples)
    })?;
    Ok(MetricsReport::new(
        "bci",
        per_mesh,
        ds.standardizer().unit_scale,
        Some(points),
        t0.elapsed().as_secs_f64(),
        serde_json::json!({ "points": points, "seed": seed }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_offset_scores_unit_scale() {
        let truth = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        let pred: Vec<Vec3> = truth.iter().map(|p| p + Vec3::new(0.0, 0.0, 1.0)).collect();
        assert_eq!(mean_vertex_error(&truth, &truth, 1.0).unwrap(), 0.0);
        assert!((mean_vertex_error(&pred, &truth, 2.5).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn report_statistics() {
        let errs = [3.0, 1.0, 2.0, 10.0];
        let per_mesh = errs
            .iter()
            .enumerate()
            .map(|(i, &e)| MeshError {
                index: i,
                path: format!("m{i}"),
                error: e,
            })
            .collect();
        let r = MetricsReport::new("x", per_mesh, 1.0, None, 0.0, serde_json::Value::Null);
        assert_eq!((r.mean, r.median, r.max), (4.0, 2.5, 10.0));
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path(), "x").unwrap();
        let csv = std::fs::read_to_string(dir.path().join("x.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("index,path,error"));
    }
}
