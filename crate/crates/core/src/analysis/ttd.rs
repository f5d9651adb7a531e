//! Labeled test datasets for part-in-part search.
//!
//! Every composite is the disjoint union of a random host solid and one
//! rigidly moved part, with the two bounding boxes separated by a gap. Since
//! no edge connects the copies, the part's facet neighborhoods are unchanged
//! inside the composite and its bag is a sub-multiset of the composite's.
//! Distractors are further hosts without any part.
//!
//! Parts are drawn with random dimensions and checked to be pairwise
//! distinguishable (no part's local bag is contained in another's), so each
//! part query has exactly one intended answer.

use std::collections::BTreeMap;

use nalgebra::{Point3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::marching_cubes::{marching_cubes, torus_field, GridSpec};
use super::primitives::{box_mesh, icosphere, prism};
use super::{random_ellipsoid_hull, AnalysisError};
use crate::mesh::{triangle_quality, TriangleMesh};
use crate::words::{build_bag, Vocabulary, WordConfig, WordId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartKind {
    Box,
    Prism,
    Icosphere,
    Torus,
    Hull,
}

impl PartKind {
    pub const ALL: [PartKind; 5] = [
        PartKind::Box,
        PartKind::Prism,
        PartKind::Icosphere,
        PartKind::Torus,
        PartKind::Hull,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtdSpec {
    pub seed: u64,
    pub composites: usize,
    pub distractors: usize,
    /// Part library; composites cycle through it.
    pub parts: Vec<PartKind>,
    /// Inclusive range of point counts for random convex hosts.
    pub host_points: [usize; 2],
    /// Range of the part's characteristic size (hosts have size ~1).
    pub part_size: [f64; 2],
    pub rotate_parts: bool,
    /// Gap between part and host boxes as a fraction of the sum of their
    /// diagonals; must be at least 0.01.
    pub gap: f64,
    pub max_retries: usize,
}

impl Default for TtdSpec {
    fn default() -> Self {
        TtdSpec {
            seed: 42,
            composites: 100,
            distractors: 400,
            parts: PartKind::ALL.to_vec(),
            host_points: [40, 120],
            part_size: [0.3, 1.0],
            rotate_parts: true,
            gap: 0.05,
            max_retries: 50,
        }
    }
}

impl TtdSpec {
    pub fn from_toml(text: &str) -> Result<Self, AnalysisError> {
        toml::from_str(text).map_err(|e| AnalysisError::InvalidParameter(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }

    fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |m: &str| Err(AnalysisError::InvalidParameter(m.to_string()));
        if self.parts.is_empty() && self.composites > 0 {
            return bad("part library is empty");
        }
        if self.host_points[0] < 4 || self.host_points[0] > self.host_points[1] {
            return bad("host_points must be an increasing range starting at >= 4");
        }
        if !(self.part_size[0] > 0.0 && self.part_size[0] <= self.part_size[1]) {
            return bad("part_size must be a positive increasing range");
        }
        if !(self.gap >= 0.01) {
            return bad("gap must be at least 0.01");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtdModel {
    pub id: String,
    pub mesh: TriangleMesh,
}

/// How a part copy sits inside its composite: `p' = R·p + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartPlacement {
    pub part: String,
    pub kind: PartKind,
    /// Unit quaternion `[w, i, j, k]`.
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtdLabel {
    pub composite: String,
    pub parts: Vec<PartPlacement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtdDataset {
    pub parts: Vec<TtdModel>,
    pub composites: Vec<TtdModel>,
    pub distractors: Vec<TtdModel>,
    pub labels: Vec<TtdLabel>,
}

impl TtdDataset {
    /// The searchable corpus: composites then distractors.
    pub fn corpus(&self) -> impl Iterator<Item = &TtdModel> {
        self.composites.iter().chain(&self.distractors)
    }
}

fn host(rng: &mut ChaCha8Rng, spec: &TtdSpec) -> TriangleMesh {
    let n = rng.random_range(spec.host_points[0]..=spec.host_points[1]);
    let axes = Vector3::new(
        rng.random_range(0.6..1.4),
        rng.random_range(0.6..1.4),
        rng.random_range(0.6..1.4),
    );
    random_ellipsoid_hull(rng, n, axes)
}

/// Rejects tessellations with near-coincident vertices or slivers, so that
/// tolerance-relative cleanup can never treat the part differently alone and
/// inside a composite.
fn well_conditioned(mesh: &TriangleMesh) -> bool {
    let diag = mesh.bbox().diagonal();
    (0..mesh.triangles.len()).all(|t| {
        let [a, b, c] = mesh.corners(t);
        let edges = [(b - a).norm(), (c - b).norm(), (a - c).norm()];
        let area = 0.5 * (b - a).cross(&(c - a)).norm();
        let p: f64 = edges.iter().sum();
        edges.iter().all(|&e| e > 1e-4 * diag) && triangle_quality(area, p) > 1e-3
    })
}

fn part(rng: &mut ChaCha8Rng, kind: PartKind, size: f64) -> Option<TriangleMesh> {
    let mesh = match kind {
        PartKind::Box => box_mesh(
            Point3::origin(),
            Vector3::new(
                size * rng.random_range(0.3..1.0),
                size * rng.random_range(0.3..1.0),
                size * rng.random_range(0.3..1.0),
            ),
        ),
        PartKind::Prism => {
            let sides = rng.random_range(3..=9);
            prism(
                sides,
                size * rng.random_range(0.3..0.6),
                size * rng.random_range(0.4..1.2),
            )
        }
        PartKind::Icosphere => {
            let sub = rng.random_range(1..=2);
            let axes = Vector3::new(
                rng.random_range(0.5..1.0),
                rng.random_range(0.5..1.0),
                rng.random_range(0.5..1.0),
            ) * (size / 2.0);
            icosphere(sub, 1.0)
                .map_points(|p| Point3::new(p.x * axes.x, p.y * axes.y, p.z * axes.z))
        }
        PartKind::Torus => {
            let major = size * rng.random_range(0.3..0.5);
            let minor = major * rng.random_range(0.25..0.5);
            let res = rng.random_range(14..=20);
            let half = (major + minor) * 1.2;
            let shift = Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ) * (2.0 * half / res as f64);
            let grid = GridSpec {
                min: [-half + shift.x, -half + shift.y, -half + shift.z],
                max: [half + shift.x, half + shift.y, half + shift.z],
                dims: [res; 3],
            };
            marching_cubes(torus_field(major, minor), &grid).ok()?
        }
        PartKind::Hull => {
            let n = rng.random_range(12..=40);
            let axes = Vector3::new(
                rng.random_range(0.5..1.0),
                rng.random_range(0.5..1.0),
                rng.random_range(0.5..1.0),
            ) * (size / 2.0);
            random_ellipsoid_hull(rng, n, axes)
        }
    };
    (!mesh.is_empty() && well_conditioned(&mesh)).then_some(mesh)
}

fn contains(big: &BTreeMap<WordId, u32>, small: &BTreeMap<WordId, u32>) -> bool {
    small
        .iter()
        .all(|(w, c)| big.get(w).is_some_and(|b| b >= c))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    // uniform on SO(3) (Shoemake)
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        b * (tau * u3).cos(),
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
    ))
}

/// Generates the dataset; identical specs give bitwise-identical output.
pub fn gen_ttd(spec: &TtdSpec) -> Result<TtdDataset, AnalysisError> {
    spec.validate()?;
    let vocab = Vocabulary::new(WordConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts: Vec<TtdModel> = Vec::with_capacity(spec.composites);
    let mut part_bags: Vec<BTreeMap<WordId, u32>> = Vec::new();
    let mut composites = Vec::with_capacity(spec.composites);
    let mut labels = Vec::with_capacity(spec.composites);

    for c in 0..spec.composites {
        let kind = spec.parts[c % spec.parts.len()];
        let mut accepted = None;
        for _ in 0..spec.max_retries {
            let size = rng.random_range(spec.part_size[0]..=spec.part_size[1]);
            let Some(mesh) = part(&mut rng, kind, size) else {
                continue;
            };
            let Ok(bag) = build_bag(&mesh, &vocab) else {
                continue;
            };
            if part_bags
                .iter()
                .any(|b| contains(b, &bag.local) || contains(&bag.local, b))
            {
                continue;
            }
            accepted = Some((mesh, bag.local));
            break;
        }
        let (part_mesh, bag) = accepted.ok_or_else(|| {
            AnalysisError::GenerationFailed(format!(
                "no distinguishable {kind:?} part after {} attempts",
                spec.max_retries
            ))
        })?;
        part_bags.push(bag);

        let host_mesh = host(&mut rng, spec);
        let rotation = if spec.rotate_parts {
            random_rotation(&mut rng)
        } else {
            UnitQuaternion::identity()
        };
        let rotated = part_mesh.map_points(|p| rotation * p);
        let hb = host_mesh.bbox();
        let pb = rotated.bbox();
        let gap = spec.gap * (hb.diagonal() + pb.diagonal());
        let jitter_y = rng.random_range(-0.25..0.25) * hb.extent()[1];
        let jitter_z = rng.random_range(-0.25..0.25) * hb.extent()[2];
        let t = Vector3::new(
            hb.max[0] + gap - pb.min[0],
            0.5 * (hb.min[1] + hb.max[1] - pb.min[1] - pb.max[1]) + jitter_y,
            0.5 * (hb.min[2] + hb.max[2] - pb.min[2] - pb.max[2]) + jitter_z,
        );
        let placed = rotated.map_points(|p| Translation3::from(t) * p);
        let union = hb.union(&placed.bbox());
        if hb.separation(&placed.bbox()) < 0.01 * union.diagonal() {
            return Err(AnalysisError::GenerationFailed(format!(
                "composite {c} violates the separation requirement"
            )));
        }

        let part_id = format!("part-{:04}", c + 1);
        let comp_id = format!("comp-{:04}", c + 1);
        labels.push(TtdLabel {
            composite: comp_id.clone(),
            parts: vec![PartPlacement {
                part: part_id.clone(),
                kind,
                rotation: [rotation.w, rotation.i, rotation.j, rotation.k],
                translation: [t.x, t.y, t.z],
            }],
        });
        composites.push(TtdModel {
            id: comp_id,
            mesh: host_mesh.disjoint_union(&placed),
        });
        parts.push(TtdModel {
            id: part_id,
            mesh: part_mesh,
        });
    }

    let distractors = (0..spec.distractors)
        .map(|d| TtdModel {
            id: format!("dist-{:04}", d + 1),
            mesh: host(&mut rng, spec),
        })
        .collect();

    Ok(TtdDataset {
        parts,
        composites,
        distractors,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::InvertedIndex;
    use crate::search::score_containment;

    fn small() -> TtdSpec {
        TtdSpec {
            composites: 10,
            distractors: 10,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = gen_ttd(&small()).unwrap();
        let b = gen_ttd(&small()).unwrap();
        assert_eq!(a, b);
        let c = gen_ttd(&TtdSpec {
            seed: 43,
            ..small()
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn labels_enumerate_the_parts() {
        let d = gen_ttd(&small()).unwrap();
        assert_eq!(d.labels.len(), 10);
        for (label, comp) in d.labels.iter().zip(&d.composites) {
            assert_eq!(label.composite, comp.id);
            let part = d
                .parts
                .iter()
                .find(|p| p.id == label.parts[0].part)
                .unwrap();
            // composite = host ⊔ transformed part, part last
            let n = part.mesh.triangles.len();
            let tail = &comp.mesh.triangles[comp.mesh.triangles.len() - n..];
            let offset = (comp.mesh.vertices.len() - part.mesh.vertices.len()) as u32;
            for (t, s) in tail.iter().zip(&part.mesh.triangles) {
                assert_eq!(*t, s.map(|i| i + offset));
            }
            let pl = &label.parts[0];
            let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                pl.rotation[0],
                pl.rotation[1],
                pl.rotation[2],
                pl.rotation[3],
            ));
            let t = Vector3::from(pl.translation);
            for (i, v) in part.mesh.vertices.iter().enumerate() {
                let expect = q * v + t;
                assert!((comp.mesh.vertices[offset as usize + i] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn parts_are_contained_in_their_composites() {
        let d = gen_ttd(&small()).unwrap();
        let vocab = Vocabulary::default();
        let mut index = InvertedIndex::default();
        for m in d.corpus() {
            index
                .insert(
                    build_bag(&m.mesh, &vocab)
                        .unwrap()
                        .with_id(m.id.as_str().into()),
                )
                .unwrap();
        }
        for (label, part) in d.labels.iter().zip(&d.parts) {
            let q = build_bag(&part.mesh, &vocab).unwrap();
            let comp = index.bag(&label.composite.as_str().into()).unwrap();
            for (w, c) in &q.local {
                assert!(
                    comp.local.get(w).copied().unwrap_or(0) >= *c,
                    "{} {}",
                    part.id,
                    w
                );
            }
            assert_eq!(score_containment(&q, comp, &index).unwrap(), 1.0);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(gen_ttd(&TtdSpec {
            gap: 0.001,
            ..small()
        })
        .is_err());
        assert!(gen_ttd(&TtdSpec {
            parts: vec![],
            ..small()
        })
        .is_err());
        let toml = small().to_toml();
        assert_eq!(TtdSpec::from_toml(&toml).unwrap(), small());
        assert!(TtdSpec::from_toml("bogus = 3").is_err());
    }
}
