use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};

use super::{hash_word, GeometricWord, WordConfig, WordKind};
use crate::mesh::{MeshStats, TriangleMesh};

const GLOBAL_TAG: u8 = b'G';

/// Ratios `(s2/s1, s3/s1)` of the principal standard deviations of the
/// surface (area-weighted second moments), largest first. Invariant under
/// rotation, translation and uniform scale.
pub fn principal_ratios(mesh: &TriangleMesh) -> Option<(f64, f64)> {
    let mut area = 0.0;
    let mut first = nalgebra::Vector3::zeros();
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(t);
        let w = 0.5 * (b - a).cross(&(c - a)).norm();
        area += w;
        first += (a.coords + b.coords + c.coords) * (w / 3.0);
    }
    if area <= 0.0 {
        return None;
    }
    let mean = first / area;

    // moments about the centroid: ∫ x xᵀ dA over a triangle = A/12 (Σ vᵢvᵢᵀ + s sᵀ)
    let mut second = Matrix3::zeros();
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(t).map(|p| p.coords - mean);
        let w = 0.5 * (b - a).cross(&(c - a)).norm();
        if w == 0.0 {
            continue;
        }
        let s = a + b + c;
        second += (a * a.transpose() + b * b.transpose() + c * c.transpose() + s * s.transpose())
            * (w / 12.0);
    }
    let cov = second / area;
    let mut eig: Vec<f64> = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    (eig[0] > 0.0).then(|| (eig[1] / eig[0], eig[2] / eig[0]))
}

fn unit_bin(x: f64, bins: u32) -> i64 {
    ((x * bins as f64).floor().max(0.0) as i64).min(bins as i64 - 1)
}

fn word(code: i64, parts: &[i64]) -> GeometricWord {
    let mut all = vec![code];
    all.extend_from_slice(parts);
    GeometricWord {
        id: hash_word(GLOBAL_TAG, 0, &all),
        kind: WordKind::Global,
        level: 0,
    }
}

/// Up to four whole-shape words: log surface area, principal proportions,
/// sphericity (closed meshes only) and log facet count.
pub fn extract_global_words(
    mesh: &TriangleMesh,
    stats: &MeshStats,
    cfg: &WordConfig,
) -> Vec<GeometricWord> {
    let g = &cfg.global;
    let mut out = Vec::with_capacity(4);
    if stats.surface_area > 0.0 {
        out.push(word(
            1,
            &[(stats.surface_area.ln() / g.area_bin_width).floor() as i64],
        ));
    }
    if let Some((r2, r3)) = principal_ratios(mesh) {
        out.push(word(
            2,
            &[unit_bin(r2, g.aspect_bins), unit_bin(r3, g.aspect_bins)],
        ));
    }
    if let Some(v) = stats.volume {
        if stats.surface_area > 0.0 {
            let sphericity = 36.0 * PI * v * v / stats.surface_area.powi(3);
            out.push(word(3, &[unit_bin(sphericity, g.sphericity_bins)]));
        }
    }
    if stats.triangle_count > 0 {
        out.push(word(
            4,
            &[((stats.triangle_count as f64).ln() / g.count_bin_width).floor() as i64],
        ));
    }
    out
}
