use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use sis_core::mesh::{load_mesh, save_mesh, VertexMask};
use sis_core::models::{fit_single_mesh, SisModel};
use sis_core::nn::load_checkpoint;
use sis_core::pipelines::{
    eval_samples, evaluate, gen_synthetic, infer_mesh, ingest_registered_corpus, mean_vertex_error,
    run_ablation_no_fusion, run_bci_baseline, train_reconstruction, train_superres, Dataset, ExperimentConfig,
    IngestOptions, ResolutionSpec, SplitMode, MANIFEST_FILE,
};
use sis_core::sphere_param::{load_embedding, quasi_conformal_distortion, save_embedding, spherical_parameterize};
use sis_core::{Result, SisError};

#[derive(Parser)]
#[command(name = "sis", version, about = "Spherical implicit surfaces for fixed-topology meshes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Options every subcommand accepts.
#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Input points for super-resolution training, evaluation or BCI.
    #[arg(long)]
    points: Option<usize>,
    /// Output directory (or file, for `param` and `infer`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a corpus of analytic bumpy spheres.
    GenSynthetic {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        level: u32,
    },
    /// Build a manifest from registered OBJ/PLY meshes.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        template: PathBuf,
        /// JSON vertex partition `{"parts": [[...], ...]}`.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Millimetres per model unit.
        #[arg(long, default_value_t = 1.0)]
        unit_scale: f64,
        /// Hold out whole windows of this many consecutive frames.
        #[arg(long)]
        frame_window: Option<usize>,
    },
    /// Map a genus-0 mesh onto the unit sphere.
    Param {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Fit a decoder to a single mesh.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        /// Precomputed embedding; parameterized on the fly when absent.
        #[arg(long)]
        embedding: Option<PathBuf>,
    },
    /// Train the globally conditioned reconstruction model.
    TrainRecon {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the locally conditioned super-resolution model.
    TrainSuperres {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Decode a checkpoint on a template, icosphere or coordinate grid.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Mesh with template topology used as the observation.
        #[arg(long)]
        input: PathBuf,
        /// `template`, `icosphere:<level>` or a coordinate file.
        #[arg(long, default_value = "template")]
        resolution: String,
        /// Dataset manifest; defaults to the one recorded in the checkpoint.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score barycentric interpolation on the test split.
    Bci {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train and compare the fused and blended-feature local models.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
}

fn config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(e) = c.epochs {
        cfg.epochs = e;
    }
    if let Some(p) = c.points {
        cfg.sample_points = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(c: &Common, default: &str) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// Accepts either a manifest file or the directory holding it.
fn open_dataset(p: &Path) -> Result<Dataset> {
    if p.is_dir() {
        Dataset::open(&p.join(MANIFEST_FILE))
    } else {
        Dataset::open(p)
    }
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d).map_err(|e| SisError::io(d, e))?;
    }
    fs::write(path, serde_json::to_string_pretty(v)?).map_err(|e| SisError::io(path, e))
}

fn load_model(path: &Path, data: Option<&Path>) -> Result<(SisModel, Dataset)> {
    let ck = load_checkpoint(path)?;
    let model = SisModel::from_checkpoint(&ck)?;
    let recorded = ck
        .metadata
        .get("extra")
        .and_then(|e| e.get("dataset"))
        .and_then(|d| d.as_str())
        .map(PathBuf::from);
    let data = data
        .map(Path::to_path_buf)
        .or(recorded)
        .ok_or_else(|| SisError::Config("checkpoint names no dataset; pass --data".into()))?;
    Ok((model, open_dataset(&data)?))
}

fn eval_points(cfg: &ExperimentConfig, c: &Common) -> Vec<usize> {
    match c.points {
        Some(p) => vec![p],
        None => cfg.eval_points.clone(),
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::GenSynthetic { common, count, level } => {
            let cfg = config(&common)?;
            let out = out_dir(&common, "synthetic");
            let m = gen_synthetic(count, cfg.seed, level, &out)?;
            info!(
                "{} meshes ({} train, {} val, {} test) in {}",
                m.entries.len(),
                m.split.train.len(),
                m.split.val.len(),
                m.split.test.len(),
                out.display()
            );
        }
        Cmd::Ingest {
            common,
            dir,
            template,
            mask,
            unit_scale,
            frame_window,
        } => {
            let cfg = config(&common)?;
            let opts = IngestOptions {
                seed: cfg.seed,
                split: frame_window.map_or(SplitMode::Iid, SplitMode::FrameWindows),
                mask: mask.map(VertexMask::load).transpose()?,
                unit_scale,
                embeddings: None,
            };
            let out = out_dir(&common, "dataset");
            let m = ingest_registered_corpus(&dir, &template, &out, &opts)?;
            info!("{} meshes ingested into {}", m.entries.len(), out.display());
        }
        Cmd::Param { common, input } => {
            let mesh = load_mesh(&input)?;
            let emb = spherical_parameterize(&mesh)?;
            let out = common.out.unwrap_or_else(|| input.with_extension("emb.ply"));
            save_embedding(&emb, &mesh, &out)?;
            let d = quasi_conformal_distortion(&mesh, &emb)?;
            info!("embedding written to {} (max distortion {:.3})", out.display(), d.max);
        }
        Cmd::Fit { common, input, embedding } => {
            let cfg = config(&common)?;
            let mesh = load_mesh(&input)?;
            let emb = match embedding {
                Some(p) => load_embedding(&p)?,
                None => spherical_parameterize(&mesh)?,
            };
            let fitted = fit_single_mesh(&mesh, &emb, &cfg.fit())?;
            let pred = fitted.predict(&emb.coords()?)?;
            let err = mean_vertex_error(&pred, mesh.vertices(), 1.0)?;
            let out = out_dir(&common, "fit");
            fs::create_dir_all(&out).map_err(|e| SisError::io(&out, e))?;
            save_mesh(&mesh.with_vertices(pred)?, out.join("fitted.obj"))?;
            write_json(
                &out.join("fit.json"),
                &serde_json::json!({
                    "mean_error": err,
                    "bbox_diagonal": mesh.bbox_diagonal(),
                    "losses": fitted.losses,
                    "config": cfg,
                }),
            )?;
            info!("mean per-vertex error {err:.6} ({:.3}% of diagonal)", 100.0 * err / mesh.bbox_diagonal());
        }
        Cmd::TrainRecon { common, data } => {
            let cfg = config(&common)?;
            let ds = open_dataset(&data)?;
            let out = out_dir(&common, "recon");
            let t = train_reconstruction(&ds, &cfg, Some(&out))?;
            let r = evaluate(&t.model, &ds, None, cfg.seed, serde_json::to_value(&cfg)?)?;
            r.write(&out, "eval")?;
            info!("best epoch {}; test mean error {:.6}", t.best_epoch, r.mean);
        }
        Cmd::TrainSuperres { common, data } => {
            let cfg = config(&common)?;
            let ds = open_dataset(&data)?;
            let out = out_dir(&common, "superres");
            let t = train_superres(&ds, &cfg, Some(&out))?;
            for p in cfg.eval_points.clone() {
                let r = evaluate(&t.model, &ds, Some(p), cfg.seed, serde_json::to_value(&cfg)?)?;
                r.write(&out, &format!("eval_{p}"))?;
                info!("{p} points: test mean error {:.6}", r.mean);
            }
        }
        Cmd::Infer {
            common,
            checkpoint,
            input,
            resolution,
            data,
        } => {
            let cfg = config(&common)?;
            let (model, ds) = load_model(&checkpoint, data.as_deref())?;
            let spec = ResolutionSpec::parse(&resolution)?;
            let mesh = load_mesh(&input)?;
            let samples = if model.kind.is_local() {
                let parts = ds.parts(model.encoding)?;
                Some(eval_samples(&parts, 0, cfg.sample_points, cfg.seed)?)
            } else {
                None
            };
            let out_mesh = infer_mesh(&model, &ds, mesh.vertices(), samples.as_deref(), &spec)?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("inferred.obj"));
            save_mesh(&out_mesh, &out)?;
            info!("{} vertices written to {}", out_mesh.vertex_count(), out.display());
        }
        Cmd::Bci { common, data } => {
            let cfg = config(&common)?;
            let ds = open_dataset(&data)?;
            let out = out_dir(&common, "bci");
            for p in eval_points(&cfg, &common) {
                let r = run_bci_baseline(&ds, p, cfg.seed)?;
                r.write(&out, &format!("bci_{p}"))?;
                info!("{p} points: test mean error {:.6}", r.mean);
            }
        }
        Cmd::Eval { common, checkpoint, data } => {
            let cfg = config(&common)?;
            let (model, ds) = load_model(&checkpoint, data.as_deref())?;
            let out = out_dir(&common, "eval");
            let points: Vec<Option<usize>> = if model.kind.is_local() {
                eval_points(&cfg, &common).into_iter().map(Some).collect()
            } else {
                vec![None]
            };
            for p in points {
                let r = evaluate(&model, &ds, p, cfg.seed, serde_json::to_value(&cfg)?)?;
                let stem = p.map_or("eval".to_string(), |p| format!("eval_{p}"));
                r.write(&out, &stem)?;
                info!("{stem}: test mean error {:.6}", r.mean);
            }
        }
        Cmd::Ablate { common, data } => {
            let cfg = config(&common)?;
            let ds = open_dataset(&data)?;
            let out = out_dir(&common, "ablation");
            let r = run_ablation_no_fusion(&ds, &cfg, Some(&out))?;
            for (i, p) in r.points.iter().enumerate() {
                info!("{p} points: fused {:.6}, coarse feature {:.6}", r.fused[i], r.no_fusion[i]);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
