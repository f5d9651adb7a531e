//! Geometric words: discrete tokens derived from per-facet neighborhoods and
//! whole-shape measurements.
//!
//! A local word quantizes a facet's perimeter (log scale), its shape quality
//! and the three unsigned dihedral angles to its edge neighbors. Global words
//! bin surface area, principal-axis proportions, sphericity and facet count.
//! A [`WordBag`] is the multiset of these words for one model.

mod bag;
mod features;
mod global;
mod quantize;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::DegenerateTolerances;

pub use bag::{build_bag, extract, local_words, Extraction, WordBag};
pub use features::{extract_local_features, LocalFeature, BOUNDARY_DIHEDRAL};
pub use global::{extract_global_words, principal_ratios};
pub use quantize::{local_bins, quantize_local, LocalBins, SENTINEL_BIN};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WordError {
    #[error("non-finite feature on facet {facet}")]
    NonFiniteFeature { facet: u32 },
    #[error("empty bag: mesh has no non-degenerate facets")]
    EmptyBag,
    #[error("invalid word config: {0}")]
    InvalidConfig(String),
}

/// Stable 64-bit word identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WordId(pub u64);

impl fmt::Display for WordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl fmt::Debug for WordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{:016x}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordKind {
    Local,
    Global,
}

impl fmt::Display for WordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WordKind::Local => "local",
            WordKind::Global => "global",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GeometricWord {
    pub id: WordId,
    pub kind: WordKind,
    /// 0 for the base vocabulary, >0 for synonyms produced by splitting.
    pub level: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalBinConfig {
    /// Width of surface-area bins in natural-log units.
    pub area_bin_width: f64,
    pub aspect_bins: u32,
    pub sphericity_bins: u32,
    /// Width of facet-count bins in natural-log units.
    pub count_bin_width: f64,
}

impl Default for GlobalBinConfig {
    fn default() -> Self {
        GlobalBinConfig {
            area_bin_width: 0.5,
            aspect_bins: 16,
            sphericity_bins: 16,
            count_bin_width: 0.5,
        }
    }
}

/// Quantization parameters shared by corpus and queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WordConfig {
    /// Weld tolerance relative to the bounding-box diagonal.
    pub weld_epsilon: f64,
    pub degenerate: DegenerateTolerances,
    pub perimeter_bin_width: f64,
    pub quality_bins: u32,
    /// Bins are centered on multiples of π/dihedral_bins, so there are
    /// `dihedral_bins + 1` of them plus the boundary sentinel.
    pub dihedral_bins: u32,
    /// Soft-binning margin as a fraction of a bin width; 0 disables it.
    pub soft_margin: f64,
    pub global: GlobalBinConfig,
}

impl Default for WordConfig {
    fn default() -> Self {
        WordConfig {
            weld_epsilon: 1e-9,
            degenerate: DegenerateTolerances::default(),
            perimeter_bin_width: 0.25,
            quality_bins: 8,
            dihedral_bins: 16,
            soft_margin: 0.0,
            global: GlobalBinConfig::default(),
        }
    }
}

impl WordConfig {
    pub fn validate(&self) -> Result<(), WordError> {
        let bad = |m: &str| Err(WordError::InvalidConfig(m.to_string()));
        if !(self.weld_epsilon >= 0.0 && self.weld_epsilon.is_finite()) {
            return bad("weld_epsilon must be finite and >= 0");
        }
        if !(self.perimeter_bin_width > 0.0 && self.perimeter_bin_width.is_finite()) {
            return bad("perimeter_bin_width must be > 0");
        }
        if self.quality_bins == 0 || self.dihedral_bins == 0 {
            return bad("bin counts must be >= 1");
        }
        if !(0.0..0.5).contains(&self.soft_margin) {
            return bad("soft_margin must be in [0, 0.5)");
        }
        let g = &self.global;
        if !(g.area_bin_width > 0.0 && g.count_bin_width > 0.0) {
            return bad("global bin widths must be > 0");
        }
        if g.aspect_bins == 0 || g.sphericity_bins == 0 {
            return bad("global bin counts must be >= 1");
        }
        if !(self.degenerate.area >= 0.0 && self.degenerate.quality >= 0.0) {
            return bad("degenerate tolerances must be >= 0");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, WordError> {
        let cfg: WordConfig =
            toml::from_str(text).map_err(|e| WordError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Word config plus the registry of split words, shared between the index and
/// every bag built against it so that queries and corpus stay aligned.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocabulary {
    pub config: WordConfig,
    /// Split word to the refinement level it was split at.
    splits: BTreeMap<WordId, u8>,
    /// Level of every synonym word (level >= 1).
    synonyms: BTreeMap<WordId, u8>,
}

impl Vocabulary {
    pub fn new(config: WordConfig) -> Self {
        Vocabulary {
            config,
            ..Default::default()
        }
    }

    pub fn from_parts(
        config: WordConfig,
        splits: BTreeMap<WordId, u8>,
        synonyms: BTreeMap<WordId, u8>,
    ) -> Self {
        Vocabulary {
            config,
            splits,
            synonyms,
        }
    }

    pub fn is_split(&self, word: WordId) -> bool {
        self.splits.contains_key(&word)
    }

    pub fn level_of(&self, word: WordId) -> u8 {
        self.synonyms.get(&word).copied().unwrap_or(0)
    }

    pub fn splits(&self) -> &BTreeMap<WordId, u8> {
        &self.splits
    }

    pub fn synonyms(&self) -> &BTreeMap<WordId, u8> {
        &self.synonyms
    }

    pub(crate) fn register_split(&mut self, word: WordId, level: u8) {
        self.splits.insert(word, level);
    }

    pub(crate) fn register_synonym(&mut self, word: WordId, level: u8) {
        self.synonyms.insert(word, level);
    }
}

pub(crate) fn hash_word(tag: u8, level: u8, parts: &[i64]) -> WordId {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update([tag, level]);
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let digest = h.finalize();
    WordId(u64::from_le_bytes(digest[..8].try_into().unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_toml_round_trip() {
        let cfg = WordConfig {
            soft_margin: 0.1,
            ..Default::default()
        };
        let text = cfg.to_toml();
        assert!(text.contains("perimeter_bin_width = 0.25"));
        assert_eq!(WordConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(WordConfig::from_toml("quality_bins = 0").is_err());
        assert!(WordConfig::from_toml("perimeter_bin_width = -1.0").is_err());
        assert!(WordConfig::from_toml("bogus = 1").is_err());
    }
}
