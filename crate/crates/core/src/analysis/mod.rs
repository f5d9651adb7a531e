//! Corpus diagnostics and synthetic data: perimeter histograms, gamma
//! fitting, marching-cubes tessellation, support lattices and labeled test
//! datasets.

mod gamma;
mod histogram;
mod lattice;
mod marching_cubes;
pub mod primitives;
mod ttd;

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use gamma::{
    digamma, fit_gamma, sample_gamma, trigamma, GammaFit, FIT_MAX_ITERATIONS, FIT_TOLERANCE,
};
pub use histogram::{BinPolicy, Histogram};
pub use lattice::{gen_support_lattice, PILLAR_FACETS, SLAB_FACETS};
pub use marching_cubes::{aligned_torus_grid, marching_cubes, sphere_field, torus_field, GridSpec};
pub use ttd::{gen_ttd, PartKind, PartPlacement, TtdDataset, TtdLabel, TtdModel, TtdSpec};

use crate::mesh::TriangleMesh;
use crate::words::{extract, Vocabulary};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid bins: {0}")]
    InvalidBins(String),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample {0} is not positive")]
    NonPositiveSample(f64),
    #[error("samples have zero variance")]
    ZeroVariance,
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("scalar field is not finite on the grid")]
    NonFiniteField,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("generation failed: {0}")]
    GenerationFailed(String),
}

/// Perimeters of the non-degenerate facets that word extraction sees.
/// Meshes that yield no facets contribute nothing.
pub fn facet_perimeters(mesh: &TriangleMesh, vocab: &Vocabulary) -> Vec<f64> {
    extract(mesh, vocab)
        .map(|e| e.features.iter().map(|f| f.perimeter).collect())
        .unwrap_or_default()
}

/// Histogram of facet perimeters over a corpus, scanned in parallel and
/// combined with [`Histogram::merge`].
pub fn perimeter_histogram(
    corpus: &[TriangleMesh],
    policy: BinPolicy,
    vocab: &Vocabulary,
) -> Result<Histogram, AnalysisError> {
    if corpus.is_empty() {
        return Err(AnalysisError::EmptyCorpus);
    }
    let empty = Histogram::new(policy)?;
    corpus
        .par_iter()
        .map(|m| Histogram::from_samples(policy, &facet_perimeters(m, vocab)))
        .try_reduce(|| empty.clone(), |a, b| a.merge(&b))
}

/// Convex hull of `n` random points on an ellipsoid with semi-axes `axes`.
/// Every point is extreme, so the hull has exactly `2n − 4` facets.
pub fn random_ellipsoid_hull(rng: &mut impl Rng, n: usize, axes: Vector3<f64>) -> TriangleMesh {
    assert!(n >= 4);
    loop {
        let pts: Vec<Point3<f64>> = (0..n)
            .map(|_| loop {
                let v: Vector3<f64> = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let len = v.norm();
                if len > 0.1 && len <= 1.0 {
                    let u = v / len;
                    break Point3::new(u.x * axes.x, u.y * axes.y, u.z * axes.z);
                }
            })
            .collect();
        if let Some(h) = primitives::convex_hull(&pts) {
            if h.triangles.len() == 2 * n - 4 {
                return h;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    #[test]
    fn single_equilateral_perimeter() {
        let h = 3f64.sqrt() / 2.0;
        let tri = TriangleMesh::new(
            vec![
                Point3::new(0., 0., 0.),
                Point3::new(1., 0., 0.),
                Point3::new(0.5, h, 0.),
            ],
            vec![[0, 1, 2]],
        );
        let policy = BinPolicy::Fixed {
            min: 0.0,
            max: 6.0,
            bins: 12,
        };
        let hist = perimeter_histogram(&[tri], policy, &Vocabulary::default()).unwrap();
        assert_eq!(hist.n, 1);
        assert_eq!(hist.counts[hist.bin_of(3.0).unwrap()], 1);
    }

    #[test]
    fn corpus_histogram_is_sum_of_parts() {
        let policy = BinPolicy::Log {
            min: 0.01,
            max: 100.0,
            bins: 40,
        };
        let vocab = Vocabulary::default();
        let a = primitives::unit_cube();
        let b = primitives::icosphere(2, 3.0);
        let both = perimeter_histogram(&[a.clone(), b.clone()], policy, &vocab).unwrap();
        let ha = perimeter_histogram(&[a], policy, &vocab).unwrap();
        let hb = perimeter_histogram(&[b], policy, &vocab).unwrap();
        assert_eq!(both, ha.merge(&hb).unwrap());
        assert!(perimeter_histogram(&[], policy, &vocab).is_err());
    }

    #[test]
    fn gamma_histogram_mode() {
        // gamma(2, 0.5) has its mode at (k-1)θ = 0.5
        let xs = sample_gamma(2.0, 0.5, 200_000, 5).unwrap();
        let h = Histogram::from_samples(
            BinPolicy::Fixed {
                min: 0.0,
                max: 4.0,
                bins: 40,
            },
            &xs,
        )
        .unwrap();
        assert!((h.mode().unwrap() - 0.5).abs() <= 0.1, "{:?}", h.mode());
    }

    #[test]
    fn ellipsoid_hull_facet_count() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(9);
        let h = random_ellipsoid_hull(&mut rng, 50, Vector3::new(1.0, 0.5, 0.8));
        assert_eq!(h.triangles.len(), 96);
    }
}
