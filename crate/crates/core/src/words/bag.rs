use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{
    extract_global_words, extract_local_features, quantize_local, LocalFeature, Vocabulary,
    WordError, WordId,
};
use crate::mesh::{
    compute_stats, detect_degenerate, weld_vertices, DegenerateReason, MeshStats, TriangleMesh,
    Welded,
};
use crate::ModelId;

/// Sparse multiset of geometric words for one model.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WordBag {
    pub model_id: ModelId,
    pub local: BTreeMap<WordId, u32>,
    pub global: BTreeMap<WordId, u32>,
    /// Non-degenerate facets at extraction time.
    pub local_total: u64,
    pub had_degenerates: bool,
    pub had_boundary: bool,
}

impl WordBag {
    pub fn with_id(mut self, id: ModelId) -> Self {
        self.model_id = id;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.local.is_empty()
    }

    pub fn distinct_words(&self) -> usize {
        self.local.len() + self.global.len()
    }

    pub fn count(&self, word: WordId) -> u32 {
        self.local
            .get(&word)
            .or_else(|| self.global.get(&word))
            .copied()
            .unwrap_or(0)
    }

    /// All words with their kind, ascending by id.
    pub fn iter_all(&self) -> impl Iterator<Item = (WordId, super::WordKind, u32)> + '_ {
        let mut all: Vec<_> = self
            .local
            .iter()
            .map(|(&w, &c)| (w, super::WordKind::Local, c))
            .chain(
                self.global
                    .iter()
                    .map(|(&w, &c)| (w, super::WordKind::Global, c)),
            )
            .collect();
        all.sort_by_key(|e| e.0);
        all.into_iter()
    }

    /// Line-oriented dump: `<word id hex> <kind> <count>`, ascending by id.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (w, kind, c) in self.iter_all() {
            writeln!(s, "{w} {kind} {c}").unwrap();
        }
        s
    }

    /// Adds another bag's local words (used for disjoint unions in tests and tools).
    pub fn add_local(&mut self, other: &WordBag) {
        for (&w, &c) in &other.local {
            *self.local.entry(w).or_insert(0) += c;
        }
        self.local_total += other.local_total;
    }
}

/// Everything computed on the way from raw geometry to a bag.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub welded: Welded,
    pub stats: MeshStats,
    pub degenerate: Vec<(u32, DegenerateReason)>,
    pub features: Vec<LocalFeature>,
    pub bag: WordBag,
}

/// Quantizes features into local word counts under the current vocabulary.
pub fn local_words(
    features: &[LocalFeature],
    vocab: &Vocabulary,
) -> Result<BTreeMap<WordId, u32>, WordError> {
    let mut counts = BTreeMap::new();
    for f in features {
        for w in quantize_local(f, vocab)? {
            *counts.entry(w.id).or_insert(0) += 1;
        }
    }
    Ok(counts)
}

/// Weld, measure, drop degenerate facets from word extraction, quantize.
pub fn extract(mesh: &TriangleMesh, vocab: &Vocabulary) -> Result<Extraction, WordError> {
    let cfg = &vocab.config;
    cfg.validate()?;
    let welded = weld_vertices(mesh, cfg.weld_epsilon);
    let degenerate = detect_degenerate(&welded.mesh, cfg.degenerate);
    let mut stats = compute_stats(&welded.mesh, &welded.adjacency);
    stats.degenerate_facets = degenerate.iter().map(|&(t, _)| t).collect();

    let features =
        extract_local_features(&welded.mesh, &welded.adjacency, &stats.degenerate_facets);
    if features.is_empty() {
        return Err(WordError::EmptyBag);
    }
    let local = local_words(&features, vocab)?;
    let mut global = BTreeMap::new();
    for w in extract_global_words(&welded.mesh, &stats, cfg) {
        *global.entry(w.id).or_insert(0) += 1;
    }
    let bag = WordBag {
        model_id: ModelId::default(),
        local,
        global,
        local_total: features.len() as u64,
        had_degenerates: !degenerate.is_empty() || !welded.log.dropped_triangles.is_empty(),
        had_boundary: features.iter().any(|f| f.dihedrals[0] < 0.0),
    };
    Ok(Extraction {
        welded,
        stats,
        degenerate,
        features,
        bag,
    })
}

/// The bag of a raw (unwelded) mesh. Deterministic in (mesh, vocabulary).
pub fn build_bag(mesh: &TriangleMesh, vocab: &Vocabulary) -> Result<WordBag, WordError> {
    extract(mesh, vocab).map(|e| e.bag)
}
