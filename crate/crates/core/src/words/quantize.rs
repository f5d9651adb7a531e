use std::f64::consts::PI;

use super::{hash_word, GeometricWord, LocalFeature, Vocabulary, WordConfig, WordError, WordKind};

/// Bin code for a boundary or degenerate-neighbor edge.
pub const SENTINEL_BIN: u32 = u32::MAX;

const LOCAL_TAG: u8 = b'L';

/// Bin tuple of a local word.
///
/// At refinement level `L` the quality and dihedral axes have `2^L` times as
/// many bins as at level 0; each level-`L` bin splits into exactly two
/// level-`L+1` bins, so refined words always nest inside their parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocalBins {
    pub level: u8,
    pub perimeter: i64,
    pub quality: u32,
    pub dihedral: [u32; 3],
}

impl LocalBins {
    pub fn word_id(&self) -> super::WordId {
        let d = self
            .dihedral
            .map(|b| if b == SENTINEL_BIN { -1 } else { b as i64 });
        hash_word(
            LOCAL_TAG,
            self.level,
            &[self.perimeter, self.quality as i64, d[0], d[1], d[2]],
        )
    }

    fn word(&self) -> GeometricWord {
        GeometricWord {
            id: self.word_id(),
            kind: WordKind::Local,
            level: self.level,
        }
    }
}

fn quality_coord(q: f64, cfg: &WordConfig) -> f64 {
    q * cfg.quality_bins as f64
}

fn dihedral_coord(d: f64, cfg: &WordConfig) -> f64 {
    d * cfg.dihedral_bins as f64 / PI + 0.5
}

/// Perimeters that are exact powers of `e^w` sit on a bin edge, where the
/// rounding of `ln` would otherwise decide the bin. Nudging the coordinate by
/// a billionth of a bin puts them deterministically in the upper bin.
const PERIMETER_NUDGE: f64 = 1e-9;

fn perimeter_coord(p: f64, cfg: &WordConfig) -> f64 {
    p.ln() / cfg.perimeter_bin_width + PERIMETER_NUDGE
}

/// Level-0 bins of a feature.
pub fn local_bins(feature: &LocalFeature, cfg: &WordConfig) -> LocalBins {
    let qmax = cfg.quality_bins - 1;
    let dmax = cfg.dihedral_bins;
    LocalBins {
        level: 0,
        perimeter: perimeter_coord(feature.perimeter, cfg).floor() as i64,
        quality: (quality_coord(feature.quality, cfg).floor().max(0.0) as u32).min(qmax),
        dihedral: feature.dihedrals.map(|d| {
            if d < 0.0 {
                SENTINEL_BIN
            } else {
                (dihedral_coord(d, cfg).floor().max(0.0) as u32).min(dmax)
            }
        }),
    }
}

fn refine_axis(coord: f64, parent: u32, level: u8) -> u32 {
    let fine = (coord * f64::from(1u32 << level)).floor();
    let lo = 2 * parent;
    (fine.max(lo as f64) as u32).clamp(lo, lo + 1)
}

/// Bins one level finer than `bins`, constrained to `bins`' subtree.
fn refine(bins: &LocalBins, feature: &LocalFeature, cfg: &WordConfig) -> LocalBins {
    let level = bins.level + 1;
    let mut dihedral = bins.dihedral;
    for (slot, &d) in dihedral.iter_mut().zip(&feature.dihedrals) {
        if *slot != SENTINEL_BIN {
            *slot = refine_axis(dihedral_coord(d, cfg), *slot, level);
        }
    }
    LocalBins {
        level,
        perimeter: bins.perimeter,
        quality: refine_axis(quality_coord(feature.quality, cfg), bins.quality, level),
        dihedral,
    }
}

/// Follows the split registry from a level-0 tuple down to the active word.
fn resolve(mut bins: LocalBins, feature: &LocalFeature, vocab: &Vocabulary) -> LocalBins {
    while vocab.is_split(bins.word_id()) {
        bins = refine(&bins, feature, &vocab.config);
    }
    bins
}

/// Nearest bin edge along any axis: (distance in bin widths, neighbor tuple).
fn nearest_edge(
    feature: &LocalFeature,
    base: &LocalBins,
    cfg: &WordConfig,
) -> Option<(f64, LocalBins)> {
    let mut best: Option<(f64, LocalBins)> = None;
    let mut consider = |dist: f64, alt: LocalBins| {
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, alt));
        }
    };

    let fp = perimeter_coord(feature.perimeter, cfg);
    let frac = fp - base.perimeter as f64;
    consider(
        frac,
        LocalBins {
            perimeter: base.perimeter - 1,
            ..*base
        },
    );
    consider(
        1.0 - frac,
        LocalBins {
            perimeter: base.perimeter + 1,
            ..*base
        },
    );

    let fq = quality_coord(feature.quality, cfg);
    let frac = fq - base.quality as f64;
    if base.quality > 0 {
        consider(
            frac,
            LocalBins {
                quality: base.quality - 1,
                ..*base
            },
        );
    }
    if base.quality + 1 < cfg.quality_bins {
        consider(
            1.0 - frac,
            LocalBins {
                quality: base.quality + 1,
                ..*base
            },
        );
    }

    for k in 0..3 {
        let b = base.dihedral[k];
        if b == SENTINEL_BIN {
            continue;
        }
        let frac = dihedral_coord(feature.dihedrals[k], cfg) - b as f64;
        let mut shifted = |nb: u32, dist: f64| {
            let mut alt = *base;
            alt.dihedral[k] = nb;
            alt.dihedral
                .sort_by_key(|&x| if x == SENTINEL_BIN { -1 } else { x as i64 });
            consider(dist, alt);
        };
        if b > 0 {
            shifted(b - 1, frac);
        }
        if b < cfg.dihedral_bins {
            shifted(b + 1, 1.0 - frac);
        }
    }
    best
}

/// Quantizes one feature into one word, or two when soft binning is on and
/// the feature lies within the margin of a bin edge.
pub fn quantize_local(
    feature: &LocalFeature,
    vocab: &Vocabulary,
) -> Result<Vec<GeometricWord>, WordError> {
    if !feature.is_finite() || feature.perimeter <= 0.0 {
        return Err(WordError::NonFiniteFeature {
            facet: feature.facet,
        });
    }
    let cfg = &vocab.config;
    let base = local_bins(feature, cfg);
    let mut out = vec![resolve(base, feature, vocab).word()];
    if cfg.soft_margin > 0.0 {
        if let Some((dist, alt)) = nearest_edge(feature, &base, cfg) {
            if dist < cfg.soft_margin {
                out.push(resolve(alt, feature, vocab).word());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature(p: f64, q: f64, d: [f64; 3]) -> LocalFeature {
        LocalFeature {
            facet: 0,
            perimeter: p,
            quality: q,
            dihedrals: d,
        }
    }

    fn vocab() -> Vocabulary {
        Vocabulary::new(WordConfig::default())
    }

    fn one(f: &LocalFeature) -> GeometricWord {
        let w = quantize_local(f, &vocab()).unwrap();
        assert_eq!(w.len(), 1);
        w[0]
    }

    #[test]
    fn nearby_perimeters_share_word_and_next_bin_differs() {
        let d = [-1.0, 0.3, 1.2];
        let a = one(&feature(1.0, 0.7, d));
        let b = one(&feature(1.0001, 0.7, d));
        let c = one(&feature(0.25f64.exp(), 0.7, d));
        // ln 1.0 / 0.25 = 0, ln 1.0001 / 0.25 ≈ 4e-4, ln e^0.25 / 0.25 = 1
        assert_eq!(a.id, b.id);
        assert_ne!(a.id, c.id);
        assert_eq!(
            local_bins(&feature(1.0001, 0.7, d), &WordConfig::default()).perimeter,
            0
        );
        assert_eq!(
            local_bins(&feature(1.3, 0.7, d), &WordConfig::default()).perimeter,
            1
        );
    }

    #[test]
    fn canonical_angles_sit_mid_bin() {
        let cfg = WordConfig::default();
        let b = local_bins(&feature(1.0, 0.5, [0.0, PI / 2.0, PI]), &cfg);
        assert_eq!(b.dihedral, [0, 8, 16]);
        let jitter = local_bins(
            &feature(1.0, 0.5, [1e-12, PI / 2.0 - 1e-12, PI - 1e-12]),
            &cfg,
        );
        assert_eq!(jitter.dihedral, b.dihedral);
    }

    #[test]
    fn sentinel_has_own_bin() {
        let cfg = WordConfig::default();
        let open = local_bins(&feature(1.0, 0.5, [-1.0, 0.0, 0.0]), &cfg);
        let closed = local_bins(&feature(1.0, 0.5, [0.0, 0.0, 0.0]), &cfg);
        assert_eq!(open.dihedral[0], SENTINEL_BIN);
        assert_ne!(open.word_id(), closed.word_id());
    }

    #[test]
    fn non_finite_rejected() {
        let f = feature(f64::NAN, 0.5, [0.0; 3]);
        assert!(matches!(
            quantize_local(&f, &vocab()),
            Err(WordError::NonFiniteFeature { .. })
        ));
    }

    #[test]
    fn quality_one_clamps_to_top_bin() {
        let b = local_bins(&feature(3.0, 1.0, [0.0; 3]), &WordConfig::default());
        assert_eq!(b.quality, 7);
    }

    #[test]
    fn refinement_nests_in_parent() {
        let cfg = WordConfig::default();
        for q in [0.0, 0.06, 0.0625, 0.12, 0.999, 1.0] {
            let f = feature(2.0, q, [-1.0, 0.4, 3.0]);
            let base = local_bins(&f, &cfg);
            let fine = refine(&base, &f, &cfg);
            let finer = refine(&fine, &f, &cfg);
            assert_eq!(fine.quality / 2, base.quality);
            assert_eq!(finer.quality / 2, fine.quality);
            for k in 0..3 {
                if base.dihedral[k] != SENTINEL_BIN {
                    assert_eq!(fine.dihedral[k] / 2, base.dihedral[k]);
                }
            }
        }
    }

    #[test]
    fn split_registry_redirects_to_synonym() {
        let mut v = vocab();
        let f = feature(2.0, 0.3, [0.0, 0.5, 1.0]);
        let base = quantize_local(&f, &v).unwrap()[0];
        v.register_split(base.id, 0);
        let syn = quantize_local(&f, &v).unwrap()[0];
        assert_ne!(syn.id, base.id);
        assert_eq!(syn.level, 1);
    }

    #[test]
    fn soft_margin_emits_neighbor_near_edge() {
        let cfg = WordConfig {
            soft_margin: 0.1,
            ..Default::default()
        };
        let v = Vocabulary::new(cfg);
        // ln p / 0.25 = 1.02: 0.02 bin widths above the edge between bins 0 and 1
        let mid = [2.0 * PI / 16.0, 5.0 * PI / 16.0, 11.0 * PI / 16.0];
        let near = feature((0.25f64 * 1.02).exp(), 0.5625, mid);
        let far = feature((0.25f64 * 1.5).exp(), 0.5625, mid);
        let w = quantize_local(&near, &v).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(quantize_local(&far, &v).unwrap().len(), 1);
        let lower = local_bins(&feature(0.25f64.exp() * 0.9, 0.5625, mid), &v.config);
        assert_eq!(w[1].id, lower.word_id());
    }
}
