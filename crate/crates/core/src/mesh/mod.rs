//! Canonical triangle meshes: parsing, welding, validation and fingerprinting.
//!
//! Every file format is normalized into a [`TriangleMesh`], an indexed
//! triangle soup whose vertex winding carries orientation. Parsers emit
//! unwelded geometry; [`weld_vertices`] merges coincident vertices and builds
//! the [`MeshAdjacency`] that the rest of the pipeline relies on.

mod hash;
mod obj;
mod stats;
mod stl;
mod weld;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hash::{canonical_hash, ContentHash};
pub use obj::parse_obj;
pub use stats::{
    compute_stats, detect_degenerate, triangle_quality, DegenerateReason, DegenerateTolerances,
    MeshStats,
};
pub use stl::{parse_stl, write_stl_ascii, write_stl_binary, StlEncoding};
pub use weld::{weld_vertices, MeshAdjacency, WeldLog, Welded};

/// Where in the input a parse error was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Byte(usize),
    Line(usize),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Byte(b) => write!(f, "byte {b}"),
            Location::Line(l) => write!(f, "line {l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("stl: truncated at record {record} (declared {declared} triangles, {len} bytes)")]
    Truncated {
        record: usize,
        declared: usize,
        len: usize,
    },
    #[error("stl: {extra} trailing bytes after {declared} declared triangles")]
    TrailingBytes { declared: usize, extra: usize },
    #[error("{format}: {message} at {location}")]
    Syntax {
        format: &'static str,
        location: Location,
        message: String,
    },
    #[error("non-finite coordinate at {location}")]
    NonFinite { location: Location },
    #[error("triangle {triangle} references vertex {index}, mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        vertex_count: usize,
    },
}

impl MeshError {
    pub(crate) fn syntax(
        format: &'static str,
        location: Location,
        message: impl Into<String>,
    ) -> Self {
        MeshError::Syntax {
            format,
            location,
            message: message.into(),
        }
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min[0] > self.max[0]
    }

    pub fn include(&mut self, p: &Point3<f64>) {
        for i in 0..3 {
            self.min[i] = self.min[i].min(p[i]);
            self.max[i] = self.max[i].max(p[i]);
        }
    }

    pub fn extent(&self) -> [f64; 3] {
        if self.is_empty() {
            return [0.0; 3];
        }
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn diagonal(&self) -> f64 {
        let [x, y, z] = self.extent();
        (x * x + y * y + z * z).sqrt()
    }

    /// Gap between two boxes along the most separated axis; negative when they overlap.
    pub fn separation(&self, other: &Aabb) -> f64 {
        (0..3)
            .map(|i| (other.min[i] - self.max[i]).max(self.min[i] - other.max[i]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for i in 0..3 {
            out.min[i] = out.min[i].min(other.min[i]);
            out.max[i] = out.max[i].max(other.max[i]);
        }
        out
    }
}

/// Indexed triangle mesh. Triangle winding is significant.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    /// Unit label from the source file, if any ("mm", "in"). Never used for conversion.
    pub unit_hint: Option<String>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Self {
        TriangleMesh {
            vertices,
            triangles,
            unit_hint: None,
        }
    }

    /// Builds an unwelded soup: three fresh vertices per triangle.
    pub fn from_triangle_soup(tris: impl IntoIterator<Item = [Point3<f64>; 3]>) -> Self {
        let mut mesh = TriangleMesh::default();
        for tri in tris {
            let base = mesh.vertices.len() as u32;
            mesh.vertices.extend_from_slice(&tri);
            mesh.triangles.push([base, base + 1, base + 2]);
        }
        mesh
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Checks the index and finiteness invariants.
    pub fn validate(&self) -> Result<(), MeshError> {
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFinite {
                    location: Location::Byte(i),
                });
            }
        }
        let n = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i as usize >= n) {
                return Err(MeshError::IndexOutOfRange {
                    triangle: t,
                    index: bad,
                    vertex_count: n,
                });
            }
        }
        Ok(())
    }

    pub fn corners(&self, t: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn bbox(&self) -> Aabb {
        let mut bb = Aabb::empty();
        for v in &self.vertices {
            bb.include(v);
        }
        bb
    }

    /// Area-weighted unnormalized normal (twice the area in magnitude).
    pub fn face_cross(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a))
    }

    /// Appends `other` as a disjoint component.
    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(
            other
                .triangles
                .iter()
                .map(|t| [t[0] + base, t[1] + base, t[2] + base]),
        );
    }

    pub fn disjoint_union(&self, other: &TriangleMesh) -> TriangleMesh {
        let mut out = self.clone();
        out.append(other);
        out
    }

    pub fn map_points(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
            unit_hint: self.unit_hint.clone(),
        }
    }

    pub fn transformed(&self, iso: &nalgebra::Isometry3<f64>) -> TriangleMesh {
        self.map_points(|p| iso * p)
    }

    pub fn translated(&self, offset: Vector3<f64>) -> TriangleMesh {
        self.map_points(|p| p + offset)
    }

    pub fn scaled(&self, factor: f64) -> TriangleMesh {
        self.map_points(|p| Point3::from(p.coords * factor))
    }

    /// Reverses the winding of every triangle.
    pub fn flipped(&self) -> TriangleMesh {
        let mut out = self.clone();
        for t in &mut out.triangles {
            t.swap(1, 2);
        }
        out
    }
}
