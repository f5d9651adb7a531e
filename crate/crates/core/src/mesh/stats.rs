use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Aabb, MeshAdjacency, TriangleMesh};

/// Summary measurements of a welded mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub triangle_count: usize,
    pub vertex_count: usize,
    pub surface_area: f64,
    pub bbox: Aabb,
    pub watertight: bool,
    pub consistent_normals: bool,
    pub boundary_edges: usize,
    pub non_manifold_edges: usize,
    pub degenerate_facets: Vec<u32>,
    /// Signed enclosed volume; present only for watertight, consistently oriented meshes.
    pub volume: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegenerateReason {
    RepeatedVertex,
    ZeroArea,
    Sliver,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegenerateTolerances {
    /// Relative to the squared bounding-box diagonal.
    pub area: f64,
    /// Absolute threshold on [`triangle_quality`].
    pub quality: f64,
}

impl Default for DegenerateTolerances {
    fn default() -> Self {
        DegenerateTolerances {
            area: 1e-12,
            quality: 1e-4,
        }
    }
}

/// Shape quality `12√3·A / p²`: 1 for an equilateral triangle, 0 when collapsed.
pub fn triangle_quality(area: f64, perimeter: f64) -> f64 {
    if perimeter > 0.0 {
        (12.0 * 3f64.sqrt() * area / (perimeter * perimeter)).min(1.0)
    } else {
        0.0
    }
}

pub(crate) fn area_and_perimeter(mesh: &TriangleMesh, t: usize) -> (f64, f64) {
    let [a, b, c] = mesh.corners(t);
    let area = 0.5 * (b - a).cross(&(c - a)).norm();
    let p = (b - a).norm() + (c - b).norm() + (a - c).norm();
    (area, p)
}

/// Flags repeated-vertex, near-zero-area and sliver facets. The mesh is not modified.
pub fn detect_degenerate(
    mesh: &TriangleMesh,
    tol: DegenerateTolerances,
) -> Vec<(u32, DegenerateReason)> {
    let diag = mesh.bbox().diagonal();
    let min_area = tol.area * diag * diag;
    let mut out = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let reason = if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            Some(DegenerateReason::RepeatedVertex)
        } else {
            let (area, p) = area_and_perimeter(mesh, t);
            if area < min_area || area == 0.0 {
                Some(DegenerateReason::ZeroArea)
            } else if triangle_quality(area, p) < tol.quality {
                Some(DegenerateReason::Sliver)
            } else {
                None
            }
        };
        if let Some(r) = reason {
            out.push((t as u32, r));
        }
    }
    out
}

/// Topology and measurement summary. `degenerate_facets` uses default tolerances.
pub fn compute_stats(mesh: &TriangleMesh, adjacency: &MeshAdjacency) -> MeshStats {
    let mut boundary_edges = 0;
    let mut non_manifold_edges = 0;
    let mut consistent = true;
    for (&(a, b), tris) in &adjacency.edges {
        match tris.len() {
            1 => boundary_edges += 1,
            2 => {
                let d0 = traverses_forward(&mesh.triangles[tris[0] as usize], a, b);
                let d1 = traverses_forward(&mesh.triangles[tris[1] as usize], a, b);
                if d0 == d1 {
                    consistent = false;
                }
            }
            _ => non_manifold_edges += 1,
        }
    }
    let has_collapsed = mesh
        .triangles
        .iter()
        .any(|t| t[0] == t[1] || t[1] == t[2] || t[0] == t[2]);
    let watertight =
        !mesh.is_empty() && boundary_edges == 0 && non_manifold_edges == 0 && !has_collapsed;

    let bbox = mesh.bbox();
    let origin = if bbox.is_empty() {
        Vector3::zeros()
    } else {
        Vector3::from(bbox.min) * 0.5 + Vector3::from(bbox.max) * 0.5
    };
    let mut surface_area = 0.0;
    let mut six_volume = 0.0;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(t).map(|p| p.coords - origin);
        surface_area += 0.5 * (b - a).cross(&(c - a)).norm();
        six_volume += a.dot(&b.cross(&c));
    }

    MeshStats {
        triangle_count: mesh.triangles.len(),
        vertex_count: mesh.vertices.len(),
        surface_area,
        bbox,
        watertight,
        consistent_normals: consistent,
        boundary_edges,
        non_manifold_edges,
        degenerate_facets: detect_degenerate(mesh, DegenerateTolerances::default())
            .into_iter()
            .map(|(t, _)| t)
            .collect(),
        volume: (watertight && consistent).then_some(six_volume / 6.0),
    }
}

fn traverses_forward(tri: &[u32; 3], a: u32, b: u32) -> bool {
    (0..3).any(|i| tri[i] == a && tri[(i + 1) % 3] == b)
}
