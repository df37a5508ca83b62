use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fill_holes, save_mesh, split_connected_components, Mesh};
use crate::error::{Result, SisError};

/// A mesh expressed as closed genus-0 submeshes.
///
/// Each submesh starts with the original vertices of its part (in the order
/// given by `index_maps`); vertices added by hole filling come after them.
#[derive(Debug, Clone)]
pub struct SubmeshDecomposition {
    pub submeshes: Vec<Mesh>,
    /// Per submesh: local vertex index -> original vertex index, for the
    /// leading non-filled vertices.
    pub index_maps: Vec<Vec<usize>>,
    pub filled_vertex_flags: Vec<Vec<bool>>,
}

/// User-supplied vertex partition, read from `{"parts": [[...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VertexMask {
    pub parts: Vec<Vec<usize>>,
}

impl VertexMask {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| SisError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Serialize, Deserialize)]
struct SubmeshRecord {
    obj_path: String,
    index_map: Vec<usize>,
    filled_flags: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct DecompositionRecord {
    submeshes: Vec<SubmeshRecord>,
}

impl SubmeshDecomposition {
    pub fn len(&self) -> usize {
        self.submeshes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.submeshes.is_empty()
    }

    /// Number of original vertices covered by the index maps.
    pub fn original_vertex_count(&self) -> usize {
        self.index_maps.iter().map(Vec::len).sum()
    }

    /// Positions of submesh `k` for a full-resolution mesh `original` sharing
    /// the template topology. Filled vertices are placed at the centroid of
    /// their hole loop, recomputed from `original`.
    pub fn submesh_positions(&self, k: usize, original: &[crate::Vec3]) -> Vec<crate::Vec3> {
        let sub = &self.submeshes[k];
        let map = &self.index_maps[k];
        let mut out: Vec<crate::Vec3> = map.iter().map(|&i| original[i]).collect();
        if out.len() < sub.vertex_count() {
            // Filled vertex c is the apex of a fan over its loop; average the
            // loop vertices adjacent to it.
            let mut sums: HashMap<usize, (crate::Vec3, usize)> = HashMap::new();
            for f in sub.faces() {
                for k2 in 0..3 {
                    let c = f[k2];
                    if c >= map.len() {
                        let a = f[(k2 + 1) % 3];
                        if a < map.len() {
                            let e = sums.entry(c).or_insert((crate::Vec3::zeros(), 0));
                            e.0 += out[a];
                            e.1 += 1;
                        }
                    }
                }
            }
            for c in map.len()..sub.vertex_count() {
                let (s, n) = sums.get(&c).copied().unwrap_or((crate::Vec3::zeros(), 1));
                out.push(s / n as f64);
            }
        }
        out
    }

    /// Writes each submesh as `<stem>_<k>.obj` next to `json_path` and the
    /// index maps as JSON.
    pub fn save(&self, json_path: impl AsRef<Path>) -> Result<()> {
        let json_path = json_path.as_ref();
        let dir = json_path.parent().unwrap_or_else(|| Path::new("."));
        let stem = json_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("submesh");
        let mut records = Vec::with_capacity(self.submeshes.len());
        for (k, sub) in self.submeshes.iter().enumerate() {
            let name = format!("{stem}_{k}.obj");
            save_mesh(sub, dir.join(&name))?;
            records.push(SubmeshRecord {
                obj_path: name,
                index_map: self.index_maps[k].clone(),
                filled_flags: self.filled_vertex_flags[k].clone(),
            });
        }
        let text = serde_json::to_string_pretty(&DecompositionRecord { submeshes: records })?;
        fs::write(json_path, text).map_err(|e| SisError::io(json_path, e))
    }

    pub fn load(json_path: impl AsRef<Path>) -> Result<Self> {
        let json_path = json_path.as_ref();
        let dir = json_path.parent().unwrap_or_else(|| Path::new("."));
        let text = fs::read_to_string(json_path).map_err(|e| SisError::io(json_path, e))?;
        let record: DecompositionRecord = serde_json::from_str(&text)?;
        let mut out = SubmeshDecomposition {
            submeshes: Vec::new(),
            index_maps: Vec::new(),
            filled_vertex_flags: Vec::new(),
        };
        for r in record.submeshes {
            out.submeshes.push(super::load_mesh(dir.join(&r.obj_path))?);
            out.index_maps.push(r.index_map);
            out.filled_vertex_flags.push(r.filled_flags);
        }
        Ok(out)
    }
}

fn close_and_check(parts: Vec<(Mesh, Vec<usize>)>) -> Result<SubmeshDecomposition> {
    let mut out = SubmeshDecomposition {
        submeshes: Vec::with_capacity(parts.len()),
        index_maps: Vec::with_capacity(parts.len()),
        filled_vertex_flags: Vec::with_capacity(parts.len()),
    };
    for (mesh, index_map) in parts {
        let filled = fill_holes(&mesh)?;
        let euler = filled.mesh.euler_characteristic();
        if euler != 2 {
            return Err(SisError::NotGenus0 { euler });
        }
        out.submeshes.push(filled.mesh);
        out.index_maps.push(index_map);
        out.filled_vertex_flags.push(filled.filled_flags);
    }
    Ok(out)
}

/// Splits a mesh into connected components and closes their holes; every
/// resulting submesh must be genus-0.
pub fn decompose_genus0(mesh: &Mesh) -> Result<SubmeshDecomposition> {
    let parts = split_connected_components(mesh)
        .into_iter()
        .map(|c| (c.mesh, c.index_map))
        .collect();
    close_and_check(parts)
}

/// Decomposes using an explicit vertex partition instead of connected
/// components. Each part keeps the faces whose three corners all lie in it.
pub fn decompose_with_mask(mesh: &Mesh, mask: &VertexMask) -> Result<SubmeshDecomposition> {
    let n = mesh.vertex_count();
    let mut owner = vec![usize::MAX; n];
    let mut local = vec![0usize; n];
    for (p, part) in mask.parts.iter().enumerate() {
        for (li, &v) in part.iter().enumerate() {
            if v >= n {
                return Err(SisError::InvalidMesh(format!(
                    "mask vertex {v} out of range (vertex count {n})"
                )));
            }
            if owner[v] != usize::MAX {
                return Err(SisError::InvalidMesh(format!(
                    "mask vertex {v} assigned to parts {} and {p}",
                    owner[v]
                )));
            }
            owner[v] = p;
            local[v] = li;
        }
    }
    if let Some(v) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(SisError::InvalidMesh(format!(
            "mask does not cover vertex {v}"
        )));
    }
    let mut faces = vec![Vec::new(); mask.parts.len()];
    for f in mesh.faces() {
        let p = owner[f[0]];
        if owner[f[1]] == p && owner[f[2]] == p {
            faces[p].push([local[f[0]], local[f[1]], local[f[2]]]);
        }
    }
    let parts = mask
        .parts
        .iter()
        .zip(faces)
        .map(|(part, faces)| {
            let verts = part.iter().map(|&v| mesh.vertices()[v]).collect();
            Ok((Mesh::new(verts, faces)?, part.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    close_and_check(parts)
}
