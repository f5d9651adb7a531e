use std::collections::HashMap;

use super::TriangleMesh;

/// Edge incidence and per-triangle neighbors of a welded mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeshAdjacency {
    /// Unordered vertex pair (low, high) to incident triangle ids, ascending.
    pub edges: HashMap<(u32, u32), Vec<u32>>,
    /// `neighbors[t][i]` is the triangle across edge `(v_i, v_{i+1})`, or `None`
    /// on boundary and non-manifold edges.
    pub neighbors: Vec<[Option<u32>; 3]>,
}

impl MeshAdjacency {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let mut edges: HashMap<(u32, u32), Vec<u32>> =
            HashMap::with_capacity(mesh.triangles.len() * 3 / 2 + 1);
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for i in 0..3 {
                let key = edge_key(tri[i], tri[(i + 1) % 3]);
                if key.0 == key.1 {
                    continue;
                }
                let list = edges.entry(key).or_default();
                if list.last() != Some(&(t as u32)) {
                    list.push(t as u32);
                }
            }
        }
        let neighbors = mesh
            .triangles
            .iter()
            .enumerate()
            .map(|(t, tri)| {
                let mut out = [None; 3];
                for (i, slot) in out.iter_mut().enumerate() {
                    let key = edge_key(tri[i], tri[(i + 1) % 3]);
                    if let Some(list) = edges.get(&key) {
                        if list.len() == 2 {
                            *slot = list.iter().copied().find(|&o| o != t as u32);
                        }
                    }
                }
                out
            })
            .collect();
        MeshAdjacency { edges, neighbors }
    }

    pub fn incident(&self, a: u32, b: u32) -> &[u32] {
        self.edges
            .get(&edge_key(a, b))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

pub(crate) fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeldLog {
    pub merged_vertices: usize,
    /// Input triangle ids that collapsed to fewer than 3 distinct vertices.
    pub dropped_triangles: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct Welded {
    pub mesh: TriangleMesh,
    pub adjacency: MeshAdjacency,
    pub log: WeldLog,
}

/// Merges vertices that snap to the same lattice cell of size
/// `epsilon * bbox_diagonal`. The first vertex seen in a cell represents it.
/// With a zero cell size only bitwise-equal points merge.
pub fn weld_vertices(mesh: &TriangleMesh, epsilon: f64) -> Welded {
    let cell = epsilon.max(0.0) * mesh.bbox().diagonal();
    let snap = |c: f64| -> u64 {
        if cell > 0.0 && cell.is_finite() {
            (c / cell).floor().to_bits()
        } else if c == 0.0 {
            0.0f64.to_bits()
        } else {
            c.to_bits()
        }
    };

    let mut cells: HashMap<[u64; 3], u32> = HashMap::with_capacity(mesh.vertices.len());
    let mut remap = Vec::with_capacity(mesh.vertices.len());
    let mut vertices = Vec::new();
    for v in &mesh.vertices {
        let key = [snap(v.x), snap(v.y), snap(v.z)];
        let id = *cells.entry(key).or_insert_with(|| {
            vertices.push(*v);
            (vertices.len() - 1) as u32
        });
        remap.push(id);
    }

    let mut log = WeldLog {
        merged_vertices: mesh.vertices.len() - vertices.len(),
        dropped_triangles: Vec::new(),
    };
    let mut triangles = Vec::with_capacity(mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = tri.map(|i| remap[i as usize]);
        if a == b || b == c || a == c {
            log.dropped_triangles.push(t as u32);
        } else {
            triangles.push([a, b, c]);
        }
    }
    let out = TriangleMesh {
        vertices,
        triangles,
        unit_hint: mesh.unit_hint.clone(),
    };
    let adjacency = MeshAdjacency::build(&out);
    Welded {
        mesh: out,
        adjacency,
        log,
    }
}
