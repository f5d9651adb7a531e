//! Closed, outward-oriented primitive solids and a 3D convex hull.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};

use crate::mesh::TriangleMesh;

/// The cube `[0,1]³`, 12 facets.
pub fn unit_cube() -> TriangleMesh {
    box_mesh(Point3::origin(), Vector3::new(1.0, 1.0, 1.0))
}

/// Axis-aligned box from `min` with edge lengths `size`, 12 facets.
pub fn box_mesh(min: Point3<f64>, size: Vector3<f64>) -> TriangleMesh {
    let vertices = (0..8)
        .map(|c| {
            Point3::new(
                min.x + if c & 1 != 0 { size.x } else { 0.0 },
                min.y + if c & 2 != 0 { size.y } else { 0.0 },
                min.z + if c & 4 != 0 { size.z } else { 0.0 },
            )
        })
        .collect();
    // corner index = x + 2y + 4z; each quad listed counter-clockwise seen from outside
    let quads = [
        [0, 2, 3, 1], // z = 0
        [4, 5, 7, 6], // z = 1
        [0, 1, 5, 4], // y = 0
        [2, 6, 7, 3], // y = 1
        [0, 4, 6, 2], // x = 0
        [1, 3, 7, 5], // x = 1
    ];
    let triangles = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh::new(vertices, triangles)
}

/// Right prism over a regular `sides`-gon of circumradius `radius`, centered
/// at the origin; caps are fanned from their centers (`4·sides` facets).
pub fn prism(sides: u32, radius: f64, height: f64) -> TriangleMesh {
    assert!(sides >= 3, "a prism needs at least 3 sides");
    let n = sides;
    let mut vertices = Vec::with_capacity(2 * n as usize + 2);
    for z in [-height / 2.0, height / 2.0] {
        for i in 0..n {
            let a = 2.0 * PI * i as f64 / n as f64;
            vertices.push(Point3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom_c = 2 * n;
    let top_c = 2 * n + 1;
    vertices.push(Point3::new(0.0, 0.0, -height / 2.0));
    vertices.push(Point3::new(0.0, 0.0, height / 2.0));
    let mut triangles = Vec::with_capacity(4 * n as usize);
    for i in 0..n {
        let j = (i + 1) % n;
        triangles.push([bottom_c, j, i]);
        triangles.push([top_c, n + i, n + j]);
        triangles.push([i, j, n + j]);
        triangles.push([i, n + j, n + i]);
    }
    TriangleMesh::new(vertices, triangles)
}

/// Geodesic sphere: an icosahedron subdivided `subdivisions` times and
/// projected onto the sphere (`20·4^s` facets).
pub fn icosphere(subdivisions: u32, radius: f64) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::from(Vector3::new(x, y, z).normalize()))
    .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Point3<f64>>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = (vertices[a as usize].coords + vertices[b as usize].coords).normalize();
                vertices.push(Point3::from(m));
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    for v in &mut vertices {
        *v = Point3::from(v.coords * radius);
    }
    TriangleMesh::new(vertices, triangles)
}

/// Convex hull of a point set by incremental insertion. Returns `None` when
/// the points are (numerically) coplanar. Points inside the hull are dropped.
pub fn convex_hull(points: &[Point3<f64>]) -> Option<TriangleMesh> {
    if points.len() < 4 {
        return None;
    }
    let scale = points
        .iter()
        .map(|p| p.coords.amax())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let eps = 1e-12 * scale * scale * scale;

    // initial tetrahedron from extreme points
    let i0 = 0;
    let i1 = (0..points.len()).max_by(|&a, &b| {
        (points[a] - points[i0])
            .norm_squared()
            .total_cmp(&(points[b] - points[i0]).norm_squared())
    })?;
    let line = points[i1] - points[i0];
    let i2 = (0..points.len()).max_by(|&a, &b| {
        line.cross(&(points[a] - points[i0]))
            .norm_squared()
            .total_cmp(&line.cross(&(points[b] - points[i0])).norm_squared())
    })?;
    let normal = line.cross(&(points[i2] - points[i0]));
    let i3 = (0..points.len()).max_by(|&a, &b| {
        normal
            .dot(&(points[a] - points[i0]))
            .abs()
            .total_cmp(&normal.dot(&(points[b] - points[i0])).abs())
    })?;
    if normal.dot(&(points[i3] - points[i0])).abs() <= eps {
        return None;
    }

    let orient = |f: &[usize; 3], p: &Point3<f64>| {
        let [a, b, c] = f.map(|i| points[i]);
        (b - a).cross(&(c - a)).dot(&(p - a))
    };
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let base = [i0, i1, i2, i3];
    for skip in 0..4 {
        let mut f = [0usize; 3];
        let mut k = 0;
        for (j, &v) in base.iter().enumerate() {
            if j != skip {
                f[k] = v;
                k += 1;
            }
        }
        if orient(&f, &points[base[skip]]) > 0.0 {
            f.swap(1, 2);
        }
        faces.push(f);
    }

    for (pi, p) in points.iter().enumerate() {
        if base.contains(&pi) {
            continue;
        }
        let visible: Vec<bool> = faces.iter().map(|f| orient(f, p) > eps).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut directed: HashMap<(usize, usize), bool> = HashMap::new();
        for (f, &vis) in faces.iter().zip(&visible) {
            for e in 0..3 {
                directed.insert((f[e], f[(e + 1) % 3]), vis);
            }
        }
        let mut next = Vec::with_capacity(faces.len() + 8);
        for (f, &vis) in faces.iter().zip(&visible) {
            if !vis {
                next.push(*f);
                continue;
            }
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                // horizon: the twin edge belongs to a hidden face
                if directed.get(&(b, a)) == Some(&false) {
                    next.push([a, b, pi]);
                }
            }
        }
        faces = next;
    }

    let mut remap: HashMap<usize, u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(faces.len());
    for f in &faces {
        triangles.push(f.map(|i| {
            *remap.entry(i).or_insert_with(|| {
                vertices.push(points[i]);
                (vertices.len() - 1) as u32
            })
        }));
    }
    Some(TriangleMesh::new(vertices, triangles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{compute_stats, weld_vertices, MeshAdjacency};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn closed(m: &TriangleMesh) -> crate::mesh::MeshStats {
        let s = compute_stats(m, &MeshAdjacency::build(m));
        assert!(s.watertight && s.consistent_normals, "{s:?}");
        s
    }

    #[test]
    fn unit_cube_is_closed_unit_volume() {
        let c = unit_cube();
        assert_eq!(c.triangles.len(), 12);
        let s = closed(&c);
        assert!((s.volume.unwrap() - 1.0).abs() < 1e-15);
        assert!((s.surface_area - 6.0).abs() < 1e-15);
    }

    #[test]
    fn prism_volume_matches_polygon_area() {
        let n = 6;
        let p = prism(n, 1.0, 2.0);
        assert_eq!(p.triangles.len(), 4 * n as usize);
        let s = closed(&p);
        let polygon = 0.5 * n as f64 * (2.0 * PI / n as f64).sin();
        assert!((s.volume.unwrap() - 2.0 * polygon).abs() < 1e-12);
    }

    #[test]
    fn icosphere_approaches_ball() {
        let s = closed(&icosphere(4, 1.0));
        assert!((s.volume.unwrap() - 4.0 / 3.0 * PI).abs() / (4.0 / 3.0 * PI) < 0.01);
        assert_eq!(icosphere(2, 1.0).triangles.len(), 320);
    }

    #[test]
    fn hull_of_cube_corners_and_interior() {
        let mut pts = unit_cube().vertices;
        pts.push(Point3::new(0.5, 0.5, 0.5));
        let h = convex_hull(&pts).unwrap();
        let w = weld_vertices(&h, 0.0);
        let s = compute_stats(&w.mesh, &w.adjacency);
        assert!(s.watertight && s.consistent_normals);
        assert!((s.volume.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(h.vertices.len(), 8);
    }

    #[test]
    fn hull_of_sphere_points_is_closed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..120)
            .map(|_| {
                let v: Vector3<f64> = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                Point3::from(v.normalize())
            })
            .collect();
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.triangles.len(), 2 * 120 - 4);
        closed(&h);
    }

    #[test]
    fn coplanar_points_have_no_hull() {
        let pts: Vec<_> = (0..10)
            .map(|i| Point3::new(i as f64, (i * i) as f64, 0.0))
            .collect();
        assert!(convex_hull(&pts).is_none());
    }
}
