use std::collections::{BTreeMap, HashMap};

use super::Mesh;
use crate::error::{Result, SisError};

/// Symmetric vertex adjacency derived from face edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborStructure {
    /// Sorted neighbours of each vertex.
    pub one_ring: Vec<Vec<usize>>,
}

impl NeighborStructure {
    pub fn vertex_count(&self) -> usize {
        self.one_ring.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.one_ring[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.one_ring[i].len()
    }
}

pub fn one_ring(mesh: &Mesh) -> NeighborStructure {
    let mut ring: Vec<Vec<usize>> = vec![Vec::new(); mesh.vertex_count()];
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            ring[a].push(b);
            ring[b].push(a);
        }
    }
    for r in &mut ring {
        r.sort_unstable();
        r.dedup();
    }
    NeighborStructure { one_ring: ring }
}

/// A face-connected piece of a mesh.
#[derive(Debug, Clone)]
pub struct Component {
    pub mesh: Mesh,
    /// Local vertex index -> original vertex index (ascending).
    pub index_map: Vec<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Splits a mesh into face-connected components, ordered by their smallest
/// original vertex index. Vertices not referenced by any face form singleton
/// components.
pub fn split_connected_components(mesh: &Mesh) -> Vec<Component> {
    let n = mesh.vertex_count();
    let mut parent: Vec<usize> = (0..n).collect();
    for f in mesh.faces() {
        for k in 1..3 {
            let (ra, rb) = (find(&mut parent, f[0]), find(&mut parent, f[k]));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }

    // Roots are the smallest index in each set because unions keep the minimum.
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    let mut comp_of = vec![0usize; n];
    let mut local = vec![0usize; n];
    let mut index_maps = Vec::with_capacity(groups.len());
    for (ci, verts) in groups.into_values().enumerate() {
        for (li, &v) in verts.iter().enumerate() {
            comp_of[v] = ci;
            local[v] = li;
        }
        index_maps.push(verts);
    }
    let mut faces: Vec<Vec<[usize; 3]>> = vec![Vec::new(); index_maps.len()];
    for f in mesh.faces() {
        faces[comp_of[f[0]]].push([local[f[0]], local[f[1]], local[f[2]]]);
    }
    index_maps
        .into_iter()
        .zip(faces)
        .map(|(index_map, faces)| {
            let vertices = index_map.iter().map(|&v| mesh.vertices()[v]).collect();
            Component {
                mesh: Mesh::new(vertices, faces).expect("component indices are valid"),
                index_map,
            }
        })
        .collect()
}

/// Checks that no undirected edge is shared by more than two faces.
pub(crate) fn check_edge_manifold(mesh: &Mesh) -> Result<HashMap<(usize, usize), usize>> {
    let mut counts: HashMap<(usize, usize), usize> = HashMap::with_capacity(mesh.face_count() * 2);
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut bad: Vec<_> = counts
        .iter()
        .filter(|(_, &c)| c > 2)
        .map(|(&e, _)| e)
        .collect();
    bad.sort_unstable();
    if let Some(&(a, b)) = bad.first() {
        return Err(SisError::NonManifoldEdge(a, b));
    }
    Ok(counts)
}

/// Ordered boundary cycles. Each loop follows the direction in which its
/// edges appear in their (single) incident face and starts at its smallest
/// vertex; loops are sorted by that vertex.
pub fn boundary_loops(mesh: &Mesh) -> Result<Vec<Vec<usize>>> {
    let counts = check_edge_manifold(mesh)?;
    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if counts[&(a.min(b), a.max(b))] == 1 && next.insert(a, b).is_some() {
                return Err(SisError::NonManifoldVertex(a));
            }
        }
    }

    let mut loops = Vec::new();
    while let Some((&start, _)) = next.iter().next() {
        let mut cycle = vec![start];
        let mut cur = next.remove(&start).expect("present");
        while cur != start {
            cycle.push(cur);
            cur = next.remove(&cur).ok_or(SisError::NonManifoldVertex(cur))?;
        }
        loops.push(cycle);
    }
    Ok(loops)
}
