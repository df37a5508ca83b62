//! Corpus manifests: synthetic generation, ingestion of registered meshes,
//! splits and loading.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SisError};
use crate::mesh::{
    decompose_genus0, decompose_with_mask, load_mesh, save_mesh, Mesh, Standardizer,
    SubmeshDecomposition, VertexMask,
};
use crate::models::PartTemplate;
use crate::nn::FourierEncoding;
use crate::sphere_geom::make_icosphere;
use crate::sphere_param::{
    load_embedding, mesh_fingerprint, save_embedding, spherical_parameterize, SphericalEmbedding,
};
use crate::Vec3;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Largest validation split drawn from the training meshes.
pub const MAX_VAL: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Mesh file, relative to the manifest directory unless absolute.
    pub path: String,
    #[serde(default)]
    pub tags: Vec<String>,
    /// Bumpy-sphere parameters `(a, b)` of synthetic meshes.
    #[serde(default)]
    pub shape: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub mesh: String,
    pub decomposition: String,
    pub embeddings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub vertex_count: usize,
    pub entries: Vec<ManifestEntry>,
    pub split: Split,
    pub standardizer: Standardizer,
    pub template: TemplateRecord,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.entries.len()];
        for &i in self
            .split
            .train
            .iter()
            .chain(&self.split.val)
            .chain(&self.split.test)
        {
            if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                return Err(SisError::Config(format!(
                    "split index {i} is out of range or repeated"
                )));
            }
        }
        if self.split.train.is_empty() {
            return Err(SisError::Config("training split is empty".into()));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?)
            .map_err(|e| SisError::io(&path, e))?;
        Ok(path)
    }

    /// Reads a manifest from a file or from a directory holding one.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&file).map_err(|e| SisError::io(&file, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)?;
        m.validate()?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, root))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Iid,
    /// Test meshes are whole runs of this many consecutive entries.
    FrameWindows(usize),
}

fn test_count(n: usize) -> usize {
    if n < 2 {
        0
    } else {
        (n / 10).max(1)
    }
}

/// Nine-to-one train/test split, then up to [`MAX_VAL`] validation meshes
/// (at most a quarter of the rest) taken out of the training side.
pub fn make_split(n: usize, seed: u64, mode: SplitMode) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let n_test = test_count(n);
    let mut test = Vec::with_capacity(n_test);
    match mode {
        SplitMode::Iid => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            test.extend_from_slice(&perm[..n_test]);
        }
        SplitMode::FrameWindows(w) => {
            let w = w.max(1);
            let mut windows: Vec<usize> = (0..n.div_ceil(w)).collect();
            windows.shuffle(&mut rng);
            for win in windows {
                if test.len() >= n_test {
                    break;
                }
                test.extend(win * w..((win + 1) * w).min(n));
            }
        }
    }
    test.sort_unstable();
    let mut rest: Vec<usize> = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
    rest.shuffle(&mut rng);
    let n_val = MAX_VAL.min(rest.len() / 4);
    let mut val = rest.split_off(rest.len() - n_val);
    val.sort_unstable();
    rest.sort_unstable();
    Split {
        train: rest,
        val,
        test,
    }
}

/// Radius of the bumpy sphere with parameters `(a, b)` along `dir`.
pub fn bumpy_radius(a: f64, b: f64, dir: &Vec3) -> f64 {
    let d = dir.normalize();
    let theta = d.x.hypot(d.y).atan2(d.z);
    let phi = d.y.atan2(d.x);
    1.0 + a * (3.0 * theta).sin() * (2.0 * phi).cos() + b * (5.0 * phi).cos() * (2.0 * theta).sin()
}

pub fn bumpy_sphere(a: f64, b: f64, dirs: &[Vec3]) -> Vec<Vec3> {
    dirs.iter()
        .map(|d| d.normalize() * bumpy_radius(a, b, d))
        .collect()
}

pub fn save_template(
    out: &Path,
    template: &Mesh,
    decomposition: &SubmeshDecomposition,
    embeddings: &[SphericalEmbedding],
) -> Result<TemplateRecord> {
    let dir = out.join("template");
    fs::create_dir_all(&dir).map_err(|e| SisError::io(&dir, e))?;
    save_mesh(template, dir.join("template.obj"))?;
    decomposition.save(dir.join("parts.json"))?;
    let mut names = Vec::new();
    for (k, (emb, sub)) in embeddings.iter().zip(&decomposition.submeshes).enumerate() {
        let name = format!("template/embedding_{k}.ply");
        save_embedding(emb, sub, &out.join(&name))?;
        names.push(name);
    }
    Ok(TemplateRecord {
        mesh: "template/template.obj".into(),
        decomposition: "template/parts.json".into(),
        embeddings: names,
    })
}

fn fit_train_standardizer(
    meshes: &[Vec<Vec3>],
    split: &Split,
    unit_scale: f64,
) -> Result<Standardizer> {
    Ok(
        Standardizer::fit_points(split.train.iter().map(|&i| meshes[i].as_slice()))?
            .with_unit_scale(unit_scale),
    )
}

/// Writes `count` bumpy spheres on a level-`level` icosphere to `out`.
/// The template is the unit icosphere, embedded by its own directions.
pub fn gen_synthetic(count: usize, seed: u64, level: u32, out: &Path) -> Result<DatasetManifest> {
    if count == 0 {
        return Err(SisError::Config("count must be positive".into()));
    }
    let ico = make_icosphere(level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: Vec<[f64; 2]> = (0..count)
        .map(|_| [rng.gen_range(-0.15..=0.15), rng.gen_range(-0.15..=0.15)])
        .collect();
    let mesh_dir = out.join("meshes");
    fs::create_dir_all(&mesh_dir).map_err(|e| SisError::io(&mesh_dir, e))?;
    let mut entries = Vec::with_capacity(count);
    let mut meshes = Vec::with_capacity(count);
    for (i, [a, b]) in shapes.iter().copied().enumerate() {
        let v = bumpy_sphere(a, b, ico.vertices());
        let name = format!("meshes/mesh_{i:04}.obj");
        save_mesh(&ico.with_vertices(v.clone())?, out.join(&name))?;
        entries.push(ManifestEntry {
            path: name,
            tags: vec!["synthetic".into()],
            shape: Some([a, b]),
        });
        meshes.push(v);
    }
    let split = make_split(count, seed, SplitMode::Iid);
    let standardizer = fit_train_standardizer(&meshes, &split, 1.0)?;
    let decomposition = decompose_genus0(&ico)?;
    let emb = SphericalEmbedding {
        sphere_points: ico.vertices().to_vec(),
        source_mesh_id: mesh_fingerprint(&decomposition.submeshes[0]),
    };
    let template = save_template(out, &ico, &decomposition, &[emb])?;
    let manifest = DatasetManifest {
        vertex_count: ico.vertex_count(),
        entries,
        split,
        standardizer,
        template,
    };
    manifest.save(out)?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub seed: u64,
    pub split: SplitMode,
    pub mask: Option<VertexMask>,
    /// Millimetres per model unit.
    pub unit_scale: f64,
    /// Reuse these embeddings (one per submesh) instead of parameterizing.
    pub embeddings: Option<Vec<SphericalEmbedding>>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            seed: 0,
            split: SplitMode::Iid,
            mask: None,
            unit_scale: 1.0,
            embeddings: None,
        }
    }
}

fn is_mesh_file(p: &Path) -> bool {
    matches!(
        p.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("obj") | Some("ply")
    )
}

/// Builds a manifest in `out` for every OBJ/PLY file in `dir` (sorted by
/// name). All files must share the template's vertex count and faces.
pub fn ingest_registered_corpus(
    dir: &Path,
    template: &Path,
    out: &Path,
    opts: &IngestOptions,
) -> Result<DatasetManifest> {
    let template_mesh = load_mesh(template)?;
    let template_abs = fs::canonicalize(template).map_err(|e| SisError::io(template, e))?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| SisError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_mesh_file(p))
        .filter(|p| {
            fs::canonicalize(p)
                .map(|c| c != template_abs)
                .unwrap_or(true)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(SisError::EmptyMesh);
    }
    let mut meshes = Vec::with_capacity(files.len());
    let mut problems = Vec::new();
    for f in &files {
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match load_mesh(f) {
            Ok(m) if m.vertex_count() != template_mesh.vertex_count() => problems.push(format!(
                "{name}: {} vertices, expected {}",
                m.vertex_count(),
                template_mesh.vertex_count()
            )),
            Ok(m) if m.faces() != template_mesh.faces() => {
                problems.push(format!("{name}: faces differ from the template"))
            }
            Ok(m) => meshes.push(m.vertices().to_vec()),
            Err(e) => problems.push(format!("{name}: {e}")),
        }
    }
    if !problems.is_empty() {
        return Err(SisError::InvalidMesh(format!(
            "topology mismatch: {}",
            problems.join("; ")
        )));
    }
    let split = make_split(meshes.len(), opts.seed, opts.split);
    let standardizer = fit_train_standardizer(&meshes, &split, opts.unit_scale)?;
    let decomposition = match &opts.mask {
        Some(mask) => decompose_with_mask(&template_mesh, mask)?,
        None => decompose_genus0(&template_mesh)?,
    };
    let embeddings = match &opts.embeddings {
        Some(e) => {
            if e.len() != decomposition.len()
                || e.iter()
                    .zip(&decomposition.submeshes)
                    .any(|(e, s)| !e.matches(s))
            {
                return Err(SisError::Dimension(
                    "supplied embeddings do not match the template parts".into(),
                ));
            }
            e.clone()
        }
        None => decomposition
            .submeshes
            .iter()
            .map(spherical_parameterize)
            .collect::<Result<Vec<_>>>()?,
    };
    fs::create_dir_all(out).map_err(|e| SisError::io(out, e))?;
    let template_record = save_template(out, &template_mesh, &decomposition, &embeddings)?;
    let entries = files
        .iter()
        .map(|f| {
            Ok(ManifestEntry {
                path: fs::canonicalize(f)
                    .map_err(|e| SisError::io(f, e))?
                    .to_string_lossy()
                    .into_owned(),
                tags: Vec::new(),
                shape: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        vertex_count: template_mesh.vertex_count(),
        entries,
        split,
        standardizer,
        template: template_record,
    };
    manifest.save(out)?;
    Ok(manifest)
}

/// A manifest with its meshes and template loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub template: Mesh,
    pub decomposition: SubmeshDecomposition,
    pub embeddings: Vec<SphericalEmbedding>,
    /// Raw vertex positions of every entry.
    pub meshes: Vec<Vec<Vec3>>,
}

impl Dataset {
    pub fn open(path: &Path) -> Result<Self> {
        let (manifest, root) = DatasetManifest::load(path)?;
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                root.join(p)
            }
        };
        let template = load_mesh(resolve(&manifest.template.mesh))?;
        let decomposition = SubmeshDecomposition::load(resolve(&manifest.template.decomposition))?;
        let embeddings = manifest
            .template
            .embeddings
            .iter()
            .map(|e| load_embedding(&resolve(e)))
            .collect::<Result<Vec<_>>>()?;
        if embeddings.len() != decomposition.len()
            || embeddings
                .iter()
                .zip(&decomposition.submeshes)
                .any(|(e, s)| !e.matches(s))
        {
            return Err(SisError::Dimension(
                "template embeddings do not match its parts".into(),
            ));
        }
        let mut meshes = Vec::with_capacity(manifest.entries.len());
        let mut problems = Vec::new();
        for e in &manifest.entries {
            let m = load_mesh(resolve(&e.path))?;
            if m.vertex_count() != template.vertex_count() || m.faces() != template.faces() {
                problems.push(e.path.clone());
            }
            meshes.push(m.vertices().to_vec());
        }
        if !problems.is_empty() {
            return Err(SisError::InvalidMesh(format!(
                "topology mismatch: {}",
                problems.join(", ")
            )));
        }
        Ok(Dataset {
            root,
            manifest,
            template,
            decomposition,
            embeddings,
            meshes,
        })
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.manifest.standardizer
    }

    pub fn standardized(&self, i: usize) -> Vec<Vec3> {
        self.standardizer().apply_all(&self.meshes[i])
    }

    pub fn parts(&self, encoding: FourierEncoding) -> Result<Vec<PartTemplate>> {
        let d = &self.decomposition;
        (0..d.len())
            .map(|k| {
                PartTemplate::new(
                    &d.submeshes[k],
                    &self.embeddings[k],
                    d.index_maps[k].clone(),
                    d.filled_vertex_flags[k].clone(),
                    encoding,
                )
            })
            .collect()
    }
}

/// Per-part sample sizes proportional to original vertex counts, each at
/// least 4 and at most the part size.
pub fn part_budgets(parts: &[PartTemplate], points: usize) -> Result<Vec<usize>> {
    if points < 4 {
        return Err(SisError::Config(format!(
            "{points} sample points; at least 4 are needed"
        )));
    }
    let total: usize = parts.iter().map(PartTemplate::original_count).sum();
    parts
        .iter()
        .map(|p| {
            let n = p.original_count();
            if n < 4 {
                return Err(SisError::InvalidMesh(format!(
                    "submesh with {n} original vertices"
                )));
            }
            let share = (points as f64 * n as f64 / total as f64).round() as usize;
            Ok(share.clamp(4, n))
        })
        .collect()
}

/// Sorted original-vertex ids of one part, uniformly without replacement.
pub fn sample_part<R: Rng + ?Sized>(rng: &mut R, part: &PartTemplate, budget: usize) -> Vec<usize> {
    let mut s = sample(
        rng,
        part.original_count(),
        budget.min(part.original_count()),
    )
    .into_vec();
    s.sort_unstable();
    s
}

/// Deterministic generator for one `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_are_disjoint_and_sized() {
        let s = make_split(500, 3, SplitMode::Iid);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (350, 100, 50));
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..500).collect::<Vec<_>>());
        assert_eq!(make_split(500, 3, SplitMode::Iid), s);
        assert_ne!(make_split(500, 4, SplitMode::Iid), s);
    }

    #[test]
    fn frame_windows_keep_runs_together() {
        let s = make_split(100, 1, SplitMode::FrameWindows(10));
        assert_eq!(s.test.len(), 10);
        assert!(s.test.windows(2).all(|w| w[1] == w[0] + 1));
        assert_eq!(s.test[0] % 10, 0);
    }

    #[test]
    fn zero_parameters_give_the_unit_sphere() {
        let ico = make_icosphere(2).unwrap();
        for (p, d) in bumpy_sphere(0.0, 0.0, ico.vertices())
            .iter()
            .zip(ico.vertices())
        {
            assert!((p - d).norm() < 1e-15);
        }
    }

    #[test]
    fn radius_formula() {
        let d = Vec3::new(1.0, 1.0, 0.5).normalize();
        let (th, ph) = (d.x.hypot(d.y).atan2(d.z), d.y.atan2(d.x));
        let want = 1.0 + 0.1 * (3.0 * th).sin() * (2.0 * ph).cos()
            - 0.05 * (5.0 * ph).cos() * (2.0 * th).sin();
        assert!((bumpy_radius(0.1, -0.05, &d) - want).abs() < 1e-15);
    }
}
