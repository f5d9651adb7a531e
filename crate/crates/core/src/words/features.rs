use serde::{Deserialize, Serialize};

use crate::mesh::{MeshAdjacency, TriangleMesh};

/// Dihedral value for an edge with no usable neighbor.
pub const BOUNDARY_DIHEDRAL: f64 = -1.0;

/// Rigid-motion invariant measurements of one facet and its 1-ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFeature {
    pub facet: u32,
    pub perimeter: f64,
    pub quality: f64,
    /// Unsigned angles between facet normals across each edge, ascending;
    /// boundary edges carry [`BOUNDARY_DIHEDRAL`].
    pub dihedrals: [f64; 3],
}

impl LocalFeature {
    pub fn is_finite(&self) -> bool {
        self.perimeter.is_finite()
            && self.quality.is_finite()
            && self.dihedrals.iter().all(|d| d.is_finite())
    }
}

/// One feature per facet not listed in `degenerate`. Edges whose neighbor is
/// missing, non-manifold or degenerate get the boundary sentinel.
///
/// The neighbor's normal is reoriented when the two facets disagree on winding,
/// so the angle does not depend on per-facet orientation.
pub fn extract_local_features(
    mesh: &TriangleMesh,
    adjacency: &MeshAdjacency,
    degenerate: &[u32],
) -> Vec<LocalFeature> {
    let mut skip = vec![false; mesh.triangles.len()];
    for &t in degenerate {
        if let Some(s) = skip.get_mut(t as usize) {
            *s = true;
        }
    }
    let normals: Vec<_> = (0..mesh.triangles.len())
        .map(|t| mesh.face_cross(t))
        .collect();

    let mut out =
        Vec::with_capacity(mesh.triangles.len() - degenerate.len().min(mesh.triangles.len()));
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if skip[t] {
            continue;
        }
        let [a, b, c] = mesh.corners(t);
        let perimeter = (b - a).norm() + (c - b).norm() + (a - c).norm();
        let area = 0.5 * normals[t].norm();
        let quality = crate::mesh::triangle_quality(area, perimeter);

        let mut dihedrals = [BOUNDARY_DIHEDRAL; 3];
        for (i, slot) in dihedrals.iter_mut().enumerate() {
            let Some(u) = adjacency.neighbors[t][i] else {
                continue;
            };
            if skip[u as usize] {
                continue;
            }
            let (ea, eb) = (tri[i], tri[(i + 1) % 3]);
            let other = &mesh.triangles[u as usize];
            let same_direction = (0..3).any(|k| other[k] == ea && other[(k + 1) % 3] == eb);
            let nu = if same_direction {
                -normals[u as usize]
            } else {
                normals[u as usize]
            };
            let nt = normals[t];
            *slot = nt.cross(&nu).norm().atan2(nt.dot(&nu));
        }
        dihedrals.sort_by(f64::total_cmp);
        out.push(LocalFeature {
            facet: t as u32,
            perimeter,
            quality,
            dihedrals,
        });
    }
    out
}
