use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::primitives::box_mesh;
use crate::mesh::TriangleMesh;

pub const PILLAR_FACETS: usize = 12;
pub const SLAB_FACETS: usize = 12;

/// A 3D-printing style support structure: a base slab of the given
/// `footprint` (x, y) carrying a jittered grid of identical thin pillars.
///
/// Everything except the pillar positions is a function of `footprint` and
/// `pillars` alone; `seed` only drives the placement jitter.
pub fn gen_support_lattice(footprint: [f64; 2], pillars: usize, seed: u64) -> TriangleMesh {
    let [fx, fy] = footprint;
    let span = fx.max(fy);
    let slab_t = 0.05 * span;
    let mut mesh = box_mesh(Point3::new(0.0, 0.0, -slab_t), Vector3::new(fx, fy, slab_t));
    if pillars == 0 {
        return mesh;
    }

    let cols = (pillars as f64).sqrt().ceil() as usize;
    let rows = pillars.div_ceil(cols);
    let (cx, cy) = (fx / cols as f64, fy / rows as f64);
    let width = 0.2 * cx.min(cy);
    let height = 0.25 * span;
    let lift = 0.01 * height;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in 0..pillars {
        let (i, j) = (p % cols, p / cols);
        let jx = rng.random_range(-0.2..=0.2) * cx;
        let jy = rng.random_range(-0.2..=0.2) * cy;
        let x = (i as f64 + 0.5) * cx + jx - width / 2.0;
        let y = (j as f64 + 0.5) * cy + jy - width / 2.0;
        mesh.append(&box_mesh(
            Point3::new(x, y, lift),
            Vector3::new(width, width, height),
        ));
    }
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{compute_stats, weld_vertices};

    #[test]
    fn facet_count_by_construction() {
        for n in [1, 2, 7, 16] {
            let m = gen_support_lattice([4.0, 3.0], n, 1);
            assert_eq!(m.triangles.len(), n * PILLAR_FACETS + SLAB_FACETS);
        }
    }

    #[test]
    fn seed_only_moves_pillars() {
        let a = gen_support_lattice([4.0, 3.0], 6, 1);
        let b = gen_support_lattice([4.0, 3.0], 6, 2);
        assert_eq!(a.triangles, b.triangles);
        assert_eq!(a.vertices[..8], b.vertices[..8], "slab is seed independent");
        assert_ne!(a.vertices, b.vertices);
        assert_eq!(a, gen_support_lattice([4.0, 3.0], 6, 1));
    }

    #[test]
    fn components_stay_separate_and_closed() {
        let m = gen_support_lattice([2.0, 2.0], 9, 5);
        let w = weld_vertices(&m, 1e-9);
        let s = compute_stats(&w.mesh, &w.adjacency);
        assert!(s.watertight && s.consistent_normals);
        assert_eq!(s.vertex_count, 8 * 10);
    }
}
