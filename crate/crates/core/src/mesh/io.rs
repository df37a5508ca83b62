//! Wavefront OBJ and ASCII PLY readers and writers.
//!
//! Only triangle meshes are accepted. Polygons with more than three corners
//! and binary PLY files are rejected with the offending line number.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Mesh;
use crate::error::{Result, SisError};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::Ply),
            _ => Err(SisError::parse(
                path,
                0,
                "unsupported mesh extension (expected .obj or .ply)",
            )),
        }
    }
}

/// Loads an OBJ or ASCII PLY triangle mesh, picking the format from the extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path)?;
    let text = fs::read(path).map_err(|e| SisError::io(path, e))?;
    let text = String::from_utf8(text).map_err(|_| {
        SisError::parse(
            path,
            0,
            "file is not UTF-8 text (binary formats are not supported)",
        )
    })?;
    match format {
        MeshFormat::Obj => parse_obj(&text, path),
        MeshFormat::Ply => parse_ply(&text, path),
    }
}

/// Writes a mesh as OBJ or ASCII PLY, picking the format from the extension.
pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if mesh.is_empty() {
        return Err(SisError::EmptyMesh);
    }
    let text = match MeshFormat::from_path(path)? {
        MeshFormat::Obj => to_obj(mesh),
        MeshFormat::Ply => to_ply(mesh.vertices(), mesh.faces()),
    };
    fs::write(path, text).map_err(|e| SisError::io(path, e))
}

pub fn to_obj(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(mesh.vertex_count() * 48 + mesh.face_count() * 24);
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

/// ASCII PLY text for a point set with optional faces.
pub fn to_ply(vertices: &[Vec3], faces: &[[usize; 3]]) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", vertices.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    let _ = writeln!(out, "element face {}", faces.len());
    out.push_str("property list uchar int vertex_indices\nend_header\n");
    for v in vertices {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    for f in faces {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}

/// Resolves a single OBJ index token (`7`, `7/1`, `7//2`, `-1`) to 0-based.
fn obj_index(token: &str, vertex_count: usize, path: &Path, line: usize) -> Result<usize> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head
        .parse()
        .map_err(|_| SisError::parse(path, line, format!("bad face index '{token}'")))?;
    let idx = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        vertex_count as i64 + raw
    } else {
        -1
    };
    if idx < 0 || idx as usize >= vertex_count {
        return Err(SisError::parse(
            path,
            line,
            format!("index out of range: {raw} (vertex count {vertex_count})"),
        ));
    }
    Ok(idx as usize)
}

pub(crate) fn parse_obj(text: &str, path: &Path) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| SisError::parse(path, line_no, "bad vertex coordinate"))?;
                if coords.len() != 3 {
                    return Err(SisError::parse(path, line_no, "vertex needs 3 coordinates"));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tokens
                    .map(|t| obj_index(t, vertices.len(), path, line_no))
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(SisError::parse(
                        path,
                        line_no,
                        format!("non-triangle face with {} corners", idx.len()),
                    ));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Mesh::new(vertices, faces).map_err(|e| SisError::parse(path, 0, e.to_string()))
}

pub(crate) fn parse_ply(text: &str, path: &Path) -> Result<Mesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(SisError::parse(path, 1, "missing 'ply' magic")),
    }

    // Header: track element counts and the position of x/y/z among vertex properties.
    let mut vertex_count = None;
    let mut face_count = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current = String::new();
    loop {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| SisError::parse(path, 0, "unterminated header"))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(SisError::parse(
                    path,
                    line_no,
                    format!("unsupported PLY format '{other}' (ASCII only)"),
                ))
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                let count: usize = count
                    .parse()
                    .map_err(|_| SisError::parse(path, line_no, "bad element count"))?;
                current = name.to_string();
                match *name {
                    "vertex" => vertex_count = Some(count),
                    "face" => face_count = count,
                    _ => {
                        if count > 0 {
                            return Err(SisError::parse(
                                path,
                                line_no,
                                format!("unsupported element '{name}'"),
                            ));
                        }
                    }
                }
            }
            ["property", "list", ..] => {}
            ["property", _, name] => {
                if current == "vertex" {
                    vertex_props.push(name.to_string());
                }
            }
            ["end_header"] => break,
            _ => {
                return Err(SisError::parse(
                    path,
                    line_no,
                    format!("bad header line '{line}'"),
                ))
            }
        }
    }

    let vertex_count = vertex_count.ok_or_else(|| SisError::parse(path, 0, "no vertex element"))?;
    let col = |name: &str| {
        vertex_props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| SisError::parse(path, 0, format!("missing vertex property '{name}'")))
    };
    let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);

    let mut vertices = Vec::with_capacity(vertex_count);
    for _ in 0..vertex_count {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| SisError::parse(path, 0, "truncated vertex list"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| SisError::parse(path, line_no, "bad vertex record"))?;
        if vals.len() < vertex_props.len() {
            return Err(SisError::parse(path, line_no, "short vertex record"));
        }
        vertices.push(Vec3::new(vals[cx], vals[cy], vals[cz]));
    }

    let mut faces = Vec::with_capacity(face_count);
    for _ in 0..face_count {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| SisError::parse(path, 0, "truncated face list"))?;
        let vals: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| SisError::parse(path, line_no, "bad face record"))?;
        if vals.is_empty() || vals[0] != 3 || vals.len() != 4 {
            return Err(SisError::parse(path, line_no, "non-triangle face"));
        }
        for &v in &vals[1..] {
            if v >= vertex_count {
                return Err(SisError::parse(
                    path,
                    line_no,
                    format!("index out of range: {v} (vertex count {vertex_count})"),
                ));
            }
        }
        faces.push([vals[1], vals[2], vals[3]]);
    }
    Mesh::new(vertices, faces).map_err(|e| SisError::parse(path, 0, e.to_string()))
}
