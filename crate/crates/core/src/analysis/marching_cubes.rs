//! Marching cubes with a generated 256-case table.
//!
//! The case table is derived rather than transcribed. On every cube face the
//! sign pattern of the four corners determines zero, one or two surface
//! segments (on the ambiguous diagonal pattern the inside corners are cut off
//! separately). Because neighbouring cubes apply the same rule to their shared
//! face, the output is crack-free. Segments are oriented so that the surface
//! normal points from inside (`f < iso`) to outside, chained into loops and
//! fanned into triangles.
//!
//! No cleanup of near-degenerate output is performed: when a corner value is
//! almost exactly `iso`, interpolated vertices land next to the corner and
//! produce slivers.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::mesh::TriangleMesh;

/// Regular sampling lattice: `dims[a]` samples from `min[a]` to `max[a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn cube(half: f64, samples: usize) -> Self {
        GridSpec {
            min: [-half; 3],
            max: [half; 3],
            dims: [samples; 3],
        }
    }

    fn step(&self, axis: usize) -> f64 {
        (self.max[axis] - self.min[axis]) / (self.dims[axis] - 1) as f64
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        Point3::new(
            self.min[0] + i as f64 * self.step(0),
            self.min[1] + j as f64 * self.step(1),
            self.min[2] + k as f64 * self.step(2),
        )
    }

    fn validate(&self) -> Result<(), AnalysisError> {
        for a in 0..3 {
            if self.dims[a] < 2 {
                return Err(AnalysisError::DegenerateGrid(format!(
                    "axis {a} has fewer than 2 samples"
                )));
            }
            if !(self.max[a] > self.min[a]) || !self.min[a].is_finite() || !self.max[a].is_finite()
            {
                return Err(AnalysisError::DegenerateGrid(format!(
                    "axis {a} has empty extent"
                )));
            }
        }
        Ok(())
    }
}

/// `x² + y² + z² − r²` about `center`.
pub fn sphere_field(center: Point3<f64>, radius: f64) -> impl Fn(&Point3<f64>) -> f64 {
    move |p| (p - center).norm_squared() - radius * radius
}

/// `(√(x²+y²) − R)² + z² − r²`: a torus around the z axis.
pub fn torus_field(major: f64, minor: f64) -> impl Fn(&Point3<f64>) -> f64 {
    move |p| {
        let rho = (p.x * p.x + p.y * p.y).sqrt() - major;
        rho * rho + p.z * p.z - minor * minor
    }
}

/// A grid around a torus whose z spacing puts sample planes at `z = ±minor`,
/// tangent to the torus top and bottom. `res` is the sample count across x.
pub fn aligned_torus_grid(major: f64, minor: f64, res: usize) -> GridSpec {
    let extent = major + minor;
    let h0 = 2.0 * extent / res.max(2) as f64;
    let m = (minor / h0).ceil().max(1.0);
    let h = minor / m;
    let nz = m as usize + 2;
    let nxy = (extent / h).ceil() as usize + 2;
    GridSpec {
        min: [-(nxy as f64) * h, -(nxy as f64) * h, -(nz as f64) * h],
        max: [nxy as f64 * h, nxy as f64 * h, nz as f64 * h],
        dims: [2 * nxy + 1, 2 * nxy + 1, 2 * nz + 1],
    }
}

// corner c = x + 2y + 4z
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7), // along x
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7), // along y
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7), // along z
];

// faces as cyclic corner loops, with outward normals
const FACES: [([usize; 4], [f64; 3]); 6] = [
    ([0, 2, 6, 4], [-1.0, 0.0, 0.0]),
    ([1, 3, 7, 5], [1.0, 0.0, 0.0]),
    ([0, 1, 5, 4], [0.0, -1.0, 0.0]),
    ([2, 3, 7, 6], [0.0, 1.0, 0.0]),
    ([0, 1, 3, 2], [0.0, 0.0, -1.0]),
    ([4, 5, 7, 6], [0.0, 0.0, 1.0]),
];

fn corner_pos(c: usize) -> Vector3<f64> {
    Vector3::new((c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64)
}

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
        .expect("corners are adjacent")
}

fn edge_mid(e: usize) -> Vector3<f64> {
    let (a, b) = EDGES[e];
    (corner_pos(a) + corner_pos(b)) * 0.5
}

fn case_triangles(case: usize) -> Vec<[u8; 3]> {
    let inside = |c: usize| case & (1 << c) != 0;
    // directed segments between edge ids
    let mut next: HashMap<usize, usize> = HashMap::new();
    for (loop_, normal) in FACES {
        let n = Vector3::from(normal);
        let centre = loop_.iter().map(|&c| corner_pos(c)).sum::<Vector3<f64>>() / 4.0;
        let ins: Vec<usize> = loop_.iter().copied().filter(|&c| inside(c)).collect();
        let outs: Vec<usize> = loop_.iter().copied().filter(|&c| !inside(c)).collect();
        let mut segments: Vec<(usize, usize, Vector3<f64>)> = Vec::new();
        let crossing = |i: usize| edge_between(loop_[i], loop_[(i + 1) % 4]);
        let cut_corner = |i: usize| (crossing((i + 3) % 4), crossing(i));
        match ins.len() {
            0 | 4 => {}
            2 if inside(loop_[0]) == inside(loop_[2]) => {
                // ambiguous: cut each inside corner off on its own
                for i in 0..4 {
                    if inside(loop_[i]) {
                        let (a, b) = cut_corner(i);
                        segments.push((a, b, centre - corner_pos(loop_[i])));
                    }
                }
            }
            _ => {
                let edges: Vec<usize> = (0..4)
                    .filter(|&i| inside(loop_[i]) != inside(loop_[(i + 1) % 4]))
                    .map(crossing)
                    .collect();
                let ci: Vector3<f64> =
                    ins.iter().map(|&c| corner_pos(c)).sum::<Vector3<f64>>() / ins.len() as f64;
                let co: Vector3<f64> =
                    outs.iter().map(|&c| corner_pos(c)).sum::<Vector3<f64>>() / outs.len() as f64;
                segments.push((edges[0], edges[1], co - ci));
            }
        }
        for (a, b, g) in segments {
            let d = g.cross(&n);
            let (from, to) = if (edge_mid(b) - edge_mid(a)).dot(&d) > 0.0 {
                (a, b)
            } else {
                (b, a)
            };
            let prev = next.insert(from, to);
            debug_assert!(prev.is_none());
        }
    }
    let mut tris = Vec::new();
    let mut starts: Vec<usize> = next.keys().copied().collect();
    starts.sort_unstable();
    let mut seen = [false; 12];
    for s in starts {
        if seen[s] {
            continue;
        }
        let mut loop_ = vec![s];
        seen[s] = true;
        let mut cur = next[&s];
        while cur != s {
            seen[cur] = true;
            loop_.push(cur);
            cur = next[&cur];
        }
        for i in 1..loop_.len() - 1 {
            tris.push([loop_[0] as u8, loop_[i] as u8, loop_[i + 1] as u8]);
        }
    }
    tris
}

fn table() -> &'static [Vec<[u8; 3]>] {
    static TABLE: OnceLock<Vec<Vec<[u8; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..256).map(case_triangles).collect())
}

/// Triangulates the `iso = 0` level set of `field` sampled on `grid`.
/// Corners with `f < 0` are inside; triangle normals point outward.
pub fn marching_cubes(
    field: impl Fn(&Point3<f64>) -> f64,
    grid: &GridSpec,
) -> Result<TriangleMesh, AnalysisError> {
    grid.validate()?;
    let [nx, ny, nz] = grid.dims;
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut values = vec![0.0; nx * ny * nz];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let v = field(&grid.point(i, j, k));
                if !v.is_finite() {
                    return Err(AnalysisError::NonFiniteField);
                }
                values[idx(i, j, k)] = v;
            }
        }
    }

    let table = table();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut edge_vertex: HashMap<(usize, u8), u32> = HashMap::new();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corner = |c: usize| (i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                let mut case = 0;
                for c in 0..8 {
                    let (a, b, d) = corner(c);
                    if values[idx(a, b, d)] < 0.0 {
                        case |= 1 << c;
                    }
                }
                let tris = &table[case];
                if tris.is_empty() {
                    continue;
                }
                let mut vertex_of = |e: u8| -> u32 {
                    let (ca, cb) = EDGES[e as usize];
                    let (a0, a1, a2) = corner(ca);
                    let (b0, b1, b2) = corner(cb);
                    let axis = e / 4;
                    let key = (idx(a0, a1, a2), axis);
                    *edge_vertex.entry(key).or_insert_with(|| {
                        let (fa, fb) = (values[idx(a0, a1, a2)], values[idx(b0, b1, b2)]);
                        let t = fa / (fa - fb);
                        let pa = grid.point(a0, a1, a2);
                        let pb = grid.point(b0, b1, b2);
                        vertices.push(pa + (pb - pa) * t);
                        (vertices.len() - 1) as u32
                    })
                };
                for t in tris {
                    triangles.push(t.map(&mut vertex_of));
                }
            }
        }
    }
    Ok(TriangleMesh::new(vertices, triangles))
}
