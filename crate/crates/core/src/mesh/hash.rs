use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::TriangleMesh;

/// SHA-256 over the canonical triangle serialization.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash(pub [u8; 32]);

impl ContentHash {
    pub const ALGORITHM: &'static str = "sha256-canonical-v1";

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", &self.to_hex()[..16])
    }
}

impl FromStr for ContentHash {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(ContentHash(out))
    }
}

impl Serialize for ContentHash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn cmp_coords(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Hash of the geometry independent of triangle order and vertex numbering.
///
/// Each triangle is rotated (never reflected) to its lexicographically
/// smallest cyclic form, triangles are sorted by their nine coordinates, and
/// the coordinates are hashed as little-endian `f64`.
pub fn canonical_hash(mesh: &TriangleMesh) -> ContentHash {
    let mut rows: Vec<[f64; 9]> = (0..mesh.triangles.len())
        .map(|t| {
            let c = mesh.corners(t);
            let rot = |k: usize| -> [f64; 9] {
                let mut r = [0.0; 9];
                for i in 0..3 {
                    let p = c[(k + i) % 3];
                    r[3 * i..3 * i + 3].copy_from_slice(&[p.x, p.y, p.z]);
                }
                r
            };
            (0..3).map(rot).min_by(|a, b| cmp_coords(a, b)).unwrap()
        })
        .collect();
    rows.sort_by(|a, b| cmp_coords(a, b));
    let mut hasher = Sha256::new();
    for row in &rows {
        for c in row {
            hasher.update(c.to_le_bytes());
        }
    }
    ContentHash(hasher.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Point3, Vector3};

    fn square() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(0., 0., 0.),
                Point3::new(1., 0., 0.),
                Point3::new(1., 1., 0.),
                Point3::new(0., 1., 0.),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
    }

    #[test]
    fn triangle_order_does_not_matter() {
        let mut m = square();
        let h = canonical_hash(&m);
        m.triangles.reverse();
        assert_eq!(canonical_hash(&m), h);
    }

    #[test]
    fn vertex_permutation_does_not_matter() {
        let m = square();
        let perm = [2u32, 0, 3, 1];
        let mut vertices = vec![Point3::origin(); 4];
        for (old, &new) in perm.iter().enumerate() {
            vertices[new as usize] = m.vertices[old];
        }
        let triangles = m
            .triangles
            .iter()
            .map(|t| t.map(|i| perm[i as usize]))
            .collect();
        assert_eq!(
            canonical_hash(&TriangleMesh::new(vertices, triangles)),
            canonical_hash(&m)
        );
    }

    #[test]
    fn orientation_and_translation_change_hash() {
        let m = square();
        assert_ne!(canonical_hash(&m.flipped()), canonical_hash(&m));
        assert_ne!(
            canonical_hash(&m.translated(Vector3::new(1., 0., 0.))),
            canonical_hash(&m)
        );
    }

    #[test]
    fn hex_round_trip() {
        let h = canonical_hash(&square());
        assert_eq!(h.to_hex().parse::<ContentHash>().unwrap(), h);
    }
}
