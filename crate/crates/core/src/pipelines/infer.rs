//! Decoding trained models on template, icosphere or user-supplied grids.

use std::fs;
use std::path::Path;

use super::dataset::Dataset;
use super::metrics::predict_template;
use crate::error::{Result, SisError};
use crate::mesh::Mesh;
use crate::models::{LocalFeatureField, ModelKind, SisModel};
use crate::sphere_geom::{make_icosphere, triangulate_unit_points};
use crate::sphere_param::{from_spherical_coords, to_spherical_coords, SphericalCoord};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub enum ResolutionSpec {
    /// The template's own vertices and faces.
    Template,
    Icosphere(u32),
    /// Explicit coordinates, meshed by their spherical convex hull.
    Coords(Vec<SphericalCoord>),
}

impl ResolutionSpec {
    /// Parses `template`, `icosphere:<level>` or a coordinate file path.
    pub fn parse(arg: &str) -> Result<Self> {
        if arg == "template" {
            return Ok(ResolutionSpec::Template);
        }
        if let Some(level) = arg.strip_prefix("icosphere:") {
            let level = level
                .parse()
                .map_err(|_| SisError::Config(format!("bad icosphere level '{level}'")))?;
            return Ok(ResolutionSpec::Icosphere(level));
        }
        Ok(ResolutionSpec::Coords(load_coords(Path::new(arg))?))
    }
}

/// Reads one `theta_hat phi_hat` pair per line (whitespace or comma
/// separated, `#` starts a comment). Both values must lie in [0, 1].
pub fn load_coords(path: &Path) -> Result<Vec<SphericalCoord>> {
    let text = fs::read_to_string(path).map_err(|e| SisError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| SisError::parse(path, n + 1, format!("bad number '{t}'")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 2 {
            return Err(SisError::parse(path, n + 1, "expected two values"));
        }
        out.push(SphericalCoord::new(vals[0], vals[1])?);
    }
    Ok(out)
}

enum Conditioning {
    Global(crate::models::GlobalFeature),
    Local(Vec<LocalFeatureField>),
}

fn condition(
    model: &SisModel,
    ds: &Dataset,
    xyz: &[Vec3],
    samples: Option<&[Vec<usize>]>,
) -> Result<Conditioning> {
    if model.kind == ModelKind::Global {
        return Ok(Conditioning::Global(model.encode_global(xyz)?));
    }
    let parts = ds.parts(model.encoding)?;
    let samples =
        samples.ok_or_else(|| SisError::Config("local models need input samples".into()))?;
    let mut fields = Vec::with_capacity(parts.len());
    for (part, s) in parts.iter().zip(samples) {
        let pos = part.gather(xyz);
        let inputs: Vec<Vec3> = s.iter().map(|&i| pos[i]).collect();
        let pts: Vec<Vec3> = s.iter().map(|&i| part.points[i]).collect();
        fields.push(model.local_field(&inputs, &pts)?);
    }
    Ok(Conditioning::Local(fields))
}

/// Decodes the model for the raw mesh `input` (template topology) on the
/// requested grid, one copy of the grid per submesh. Local models read the
/// vertices listed in `samples`.
pub fn infer_mesh(
    model: &SisModel,
    ds: &Dataset,
    input: &[Vec3],
    samples: Option<&[Vec<usize>]>,
    spec: &ResolutionSpec,
) -> Result<Mesh> {
    if input.len() != ds.template.vertex_count() {
        return Err(SisError::Dimension(format!(
            "input has {} vertices, template has {}",
            input.len(),
            ds.template.vertex_count()
        )));
    }
    let (dirs, faces) = match spec {
        ResolutionSpec::Template => {
            let parts = ds.parts(model.encoding)?;
            let v = predict_template(model, &parts, input, samples)?;
            return ds.template.with_vertices(v);
        }
        ResolutionSpec::Icosphere(level) => {
            let ico = make_icosphere(*level)?;
            (ico.vertices().to_vec(), ico.faces().to_vec())
        }
        ResolutionSpec::Coords(coords) => {
            let dirs: Vec<Vec3> = coords.iter().map(from_spherical_coords).collect();
            let tri = triangulate_unit_points(&dirs)?;
            (dirs, tri.faces().to_vec())
        }
    };
    let coords = dirs
        .iter()
        .map(to_spherical_coords)
        .collect::<Result<Vec<_>>>()?;
    let xyz = model.standardizer.apply_all(input);
    let cond = condition(model, ds, &xyz, samples)?;
    let mut vertices = Vec::with_capacity(dirs.len() * model.parts());
    let mut all_faces = Vec::with_capacity(faces.len() * model.parts());
    for k in 0..model.parts() {
        let v = match &cond {
            Conditioning::Global(z) => model.decode_global(k, z, &coords)?,
            Conditioning::Local(fields) => model.decode_local_at(k, &fields[k], &dirs, &coords)?,
        };
        let off = vertices.len();
        vertices.extend(model.standardizer.invert_all(&v));
        all_faces.extend(faces.iter().map(|f| f.map(|i| i + off)));
    }
    Mesh::new(vertices, all_faces)
}
