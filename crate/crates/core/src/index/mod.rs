//! Dynamic inverted index from geometric words to models.
//!
//! The index keeps a forward store (model to bag) and an inverted store
//! (word to posting list) that are kept mutually consistent by every
//! mutation. Words can be marked generic (excluded from matching) or split
//! into finer synonyms without touching unrelated postings.
//!
//! The index itself is plain data: callers that share it across threads wrap
//! it in a reader-writer lock, and every mutation completes its fallible work
//! before touching state, so a reader never observes a half-applied change.

mod persist;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;
use std::sync::RwLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use persist::{PersistError, FORMAT_VERSION, MAGIC};

use crate::words::{
    local_words, LocalFeature, Vocabulary, WordBag, WordConfig, WordError, WordId, WordKind,
};
use crate::ModelId;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("model {0} is already indexed")]
    DuplicateModel(ModelId),
    #[error("model {0} is not indexed")]
    UnknownModel(ModelId),
    #[error("bag for {0} has no local words")]
    EmptyBag(ModelId),
    #[error("word {0} is not in the index")]
    WordNotFound(WordId),
    #[error("word {0} is a global word and cannot be split")]
    GlobalWordSplit(WordId),
    #[error("generic threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("index is empty")]
    EmptyIndex,
    #[error("feature source failed for {model}: {message}")]
    FeatureSource { model: ModelId, message: String },
    #[error("features for {0} do not reproduce its indexed bag")]
    FeatureMismatch(ModelId),
    #[error(transparent)]
    Words(#[from] WordError),
    #[error("index audit failed: {0}")]
    Audit(String),
}

/// Which words of a query take part in matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WordScope {
    All,
    LocalOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostingList {
    pub word: WordId,
    pub kind: WordKind,
    pub entries: BTreeMap<ModelId, u32>,
}

impl PostingList {
    pub fn df(&self) -> usize {
        self.entries.len()
    }
}

/// `ln(1 + N/df)`, with words unseen in the corpus weighted as if `df = 1`.
pub fn idf(model_count: usize, df: usize) -> f64 {
    if model_count == 0 {
        return 0.0;
    }
    (1.0 + model_count as f64 / df.max(1) as f64).ln()
}

/// Per-word weights used by the scorers.
pub trait WordWeights {
    fn weight(&self, word: WordId) -> f64;
}

impl<F: Fn(WordId) -> f64> WordWeights for F {
    fn weight(&self, word: WordId) -> f64 {
        self(word)
    }
}

/// Supplies the local features of an indexed model, e.g. by re-deriving them
/// from stored geometry. Needed to split words.
pub trait FeatureSource {
    fn features(&self, model: &ModelId) -> Result<Vec<LocalFeature>, String>;
}

impl FeatureSource for HashMap<ModelId, Vec<LocalFeature>> {
    fn features(&self, model: &ModelId) -> Result<Vec<LocalFeature>, String> {
        self.get(model)
            .cloned()
            .ok_or_else(|| "no features stored".to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    vocab: Vocabulary,
    forward: BTreeMap<ModelId, WordBag>,
    postings: HashMap<WordId, PostingList>,
    generic: BTreeSet<WordId>,
    norms: NormCache,
}

/// Weighted bag norms under the current weights. Every mutation changes the
/// weights, so mutations empty it; queries fill it lazily. Not part of the
/// index's identity.
#[derive(Default)]
struct NormCache(RwLock<HashMap<ModelId, f64>>);

impl Clone for NormCache {
    fn clone(&self) -> Self {
        NormCache::default()
    }
}

impl PartialEq for NormCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl std::fmt::Debug for NormCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("NormCache")
    }
}

impl NormCache {
    fn reset(&mut self) {
        self.0.get_mut().unwrap_or_else(|e| e.into_inner()).clear();
    }
}

impl Default for InvertedIndex {
    fn default() -> Self {
        InvertedIndex::new(WordConfig::default())
    }
}

impl WordWeights for InvertedIndex {
    fn weight(&self, word: WordId) -> f64 {
        if self.generic.contains(&word) {
            return 0.0;
        }
        idf(self.len(), self.df(word))
    }
}

impl InvertedIndex {
    pub fn new(config: WordConfig) -> Self {
        InvertedIndex::with_vocabulary(Vocabulary::new(config))
    }

    pub fn with_vocabulary(vocab: Vocabulary) -> Self {
        InvertedIndex {
            vocab,
            forward: BTreeMap::new(),
            postings: HashMap::new(),
            generic: BTreeSet::new(),
            norms: NormCache::default(),
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Number of indexed models.
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn contains(&self, model: &ModelId) -> bool {
        self.forward.contains_key(model)
    }

    pub fn bag(&self, model: &ModelId) -> Option<&WordBag> {
        self.forward.get(model)
    }

    pub fn bags(&self) -> impl Iterator<Item = &WordBag> {
        self.forward.values()
    }

    pub fn model_ids(&self) -> impl Iterator<Item = &ModelId> {
        self.forward.keys()
    }

    pub fn posting(&self, word: WordId) -> Option<&PostingList> {
        self.postings.get(&word)
    }

    pub fn word_count(&self) -> usize {
        self.postings.len()
    }

    pub fn df(&self, word: WordId) -> usize {
        self.postings.get(&word).map_or(0, PostingList::df)
    }

    pub fn generic_words(&self) -> &BTreeSet<WordId> {
        &self.generic
    }

    pub fn is_generic(&self, word: WordId) -> bool {
        self.generic.contains(&word)
    }

    /// Squared weighted norm `Σ (count·ω)²` of an indexed bag, summed over
    /// local then global words in word order; cached until the next mutation.
    pub fn weighted_norm_sq(&self, model: &ModelId) -> Option<f64> {
        if let Some(&n) = self
            .norms
            .0
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(model)
        {
            return Some(n);
        }
        let bag = self.forward.get(model)?;
        let mut n = 0.0;
        for (&w, &c) in bag.local.iter().chain(&bag.global) {
            let om = self.weight(w);
            if om != 0.0 {
                let b = c as f64 * om;
                n += b * b;
            }
        }
        self.norms
            .0
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(model.clone(), n);
        Some(n)
    }

    pub fn insert(&mut self, bag: WordBag) -> Result<(), IndexError> {
        self.norms.reset();
        if bag.is_empty() {
            return Err(IndexError::EmptyBag(bag.model_id));
        }
        if self.forward.contains_key(&bag.model_id) {
            return Err(IndexError::DuplicateModel(bag.model_id));
        }
        self.link(&bag);
        self.forward.insert(bag.model_id.clone(), bag);
        Ok(())
    }

    fn link(&mut self, bag: &WordBag) {
        let words = bag
            .local
            .iter()
            .map(|(w, c)| (w, c, WordKind::Local))
            .chain(bag.global.iter().map(|(w, c)| (w, c, WordKind::Global)));
        for (&word, &count, kind) in words {
            self.postings
                .entry(word)
                .or_insert_with(|| PostingList {
                    word,
                    kind,
                    entries: BTreeMap::new(),
                })
                .entries
                .insert(bag.model_id.clone(), count);
        }
    }

    fn unlink(&mut self, bag: &WordBag) {
        for word in bag.local.keys().chain(bag.global.keys()) {
            if let Some(list) = self.postings.get_mut(word) {
                list.entries.remove(&bag.model_id);
                if list.entries.is_empty() {
                    self.postings.remove(word);
                }
            }
        }
    }

    /// Removes a model from both stores and returns its bag.
    pub fn remove(&mut self, model: &ModelId) -> Result<WordBag, IndexError> {
        self.norms.reset();
        let bag = self
            .forward
            .remove(model)
            .ok_or_else(|| IndexError::UnknownModel(model.clone()))?;
        self.unlink(&bag);
        Ok(bag)
    }

    /// Marks every word whose document frequency ratio exceeds `threshold`
    /// as generic. Returns the newly marked words.
    pub fn mark_generic(&mut self, threshold: f64) -> Result<BTreeSet<WordId>, IndexError> {
        self.norms.reset();
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(IndexError::InvalidThreshold(threshold));
        }
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        let n = self.len() as f64;
        let fresh: BTreeSet<WordId> = self
            .postings
            .values()
            .filter(|p| p.df() as f64 / n > threshold && !self.generic.contains(&p.word))
            .map(|p| p.word)
            .collect();
        self.generic.extend(fresh.iter().copied());
        Ok(fresh)
    }

    /// Replaces a local word by finer synonyms, re-deriving the occurrences of
    /// every model that contains it. Future bags built against this index's
    /// vocabulary apply the same refinement.
    pub fn split_generic_word(
        &mut self,
        word: WordId,
        source: &dyn FeatureSource,
    ) -> Result<Vec<WordId>, IndexError> {
        self.norms.reset();
        let posting = self
            .postings
            .get(&word)
            .ok_or(IndexError::WordNotFound(word))?;
        if posting.kind == WordKind::Global {
            return Err(IndexError::GlobalWordSplit(word));
        }
        let level = self.vocab.level_of(word);
        let mut refined = self.vocab.clone();
        refined.register_split(word, level);

        let mut rewritten = Vec::with_capacity(posting.df());
        for model in posting.entries.keys() {
            let features = source
                .features(model)
                .map_err(|message| IndexError::FeatureSource {
                    model: model.clone(),
                    message,
                })?;
            let old = &self.forward[model];
            if local_words(&features, &self.vocab)? != old.local {
                return Err(IndexError::FeatureMismatch(model.clone()));
            }
            let mut bag = old.clone();
            bag.local = local_words(&features, &refined)?;
            rewritten.push(bag);
        }

        let mut synonyms = BTreeSet::new();
        for bag in &rewritten {
            let old = &self.forward[&bag.model_id];
            synonyms.extend(
                bag.local
                    .keys()
                    .filter(|w| !old.local.contains_key(w))
                    .copied(),
            );
        }
        for &s in &synonyms {
            refined.register_synonym(s, level + 1);
        }

        for bag in rewritten {
            let old = self.forward.remove(&bag.model_id).expect("model present");
            self.unlink(&old);
            self.link(&bag);
            self.forward.insert(bag.model_id.clone(), bag);
        }
        self.vocab = refined;
        self.generic.remove(&word);
        Ok(synonyms.into_iter().collect())
    }

    /// Models sharing at least one non-generic word with the query.
    pub fn candidates(&self, query: &WordBag, scope: WordScope) -> BTreeSet<ModelId> {
        let mut words: Vec<WordId> = query.local.keys().copied().collect();
        if scope == WordScope::All {
            words.extend(query.global.keys().copied());
        }
        words
            .par_iter()
            .filter(|w| !self.generic.contains(w))
            .filter_map(|w| self.postings.get(w))
            .map(|p| p.entries.keys().cloned().collect::<BTreeSet<_>>())
            .reduce(BTreeSet::new, |mut a, mut b| {
                if a.len() < b.len() {
                    std::mem::swap(&mut a, &mut b);
                }
                a.extend(b);
                a
            })
    }

    /// Rebuilds the inverted store from the forward store and compares.
    pub fn audit(&self) -> Result<(), IndexError> {
        let mut rebuilt = InvertedIndex::with_vocabulary(self.vocab.clone());
        for bag in self.forward.values() {
            if bag.is_empty() {
                return Err(IndexError::Audit(format!("empty bag for {}", bag.model_id)));
            }
            rebuilt.link(bag);
        }
        if rebuilt.postings != self.postings {
            return Err(IndexError::Audit(
                "inverted store does not match forward store".into(),
            ));
        }
        for (id, bag) in &self.forward {
            if id != &bag.model_id {
                return Err(IndexError::Audit(format!(
                    "bag keyed {id} names {}",
                    bag.model_id
                )));
            }
        }
        Ok(())
    }

    /// Line-oriented summary for diagnostics.
    pub fn stats_dump(&self) -> String {
        let mut s = String::new();
        writeln!(s, "models {}", self.len()).unwrap();
        writeln!(s, "words {}", self.word_count()).unwrap();
        writeln!(s, "generic {}", self.generic.len()).unwrap();
        writeln!(s, "splits {}", self.vocab.splits().len()).unwrap();
        writeln!(s, "df-histogram").unwrap();
        for (lo, count) in self.df_histogram() {
            writeln!(s, "{lo} {count}").unwrap();
        }
        writeln!(s, "generic-words").unwrap();
        for w in &self.generic {
            writeln!(s, "{w} {}", self.df(*w)).unwrap();
        }
        s
    }

    /// Word counts bucketed by document frequency in powers of two:
    /// `(bucket lower bound, words)`.
    pub fn df_histogram(&self) -> Vec<(usize, usize)> {
        let mut buckets: BTreeMap<usize, usize> = BTreeMap::new();
        for p in self.postings.values() {
            let df = p.df();
            let lo = 1usize << (usize::BITS - 1 - df.leading_zeros());
            *buckets.entry(lo).or_insert(0) += 1;
        }
        buckets.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn bag(id: &str, local: &[(u64, u32)]) -> WordBag {
        WordBag {
            model_id: ModelId::new(id),
            local: local.iter().map(|&(w, c)| (WordId(w), c)).collect(),
            local_total: local.iter().map(|&(_, c)| c as u64).sum(),
            ..Default::default()
        }
    }

    #[test]
    fn insert_updates_df_and_count() {
        let mut idx = InvertedIndex::default();
        idx.insert(bag("a", &[(1, 2), (2, 1)])).unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.df(WordId(1)), 1);
        assert_eq!(idx.df(WordId(2)), 1);
        idx.insert(bag("b", &[(1, 1)])).unwrap();
        assert_eq!(idx.df(WordId(1)), 2);
        assert!(matches!(
            idx.insert(bag("a", &[(3, 1)])),
            Err(IndexError::DuplicateModel(_))
        ));
    }

    #[test]
    fn remove_is_inverse_of_insert() {
        let empty = InvertedIndex::default();
        let mut idx = empty.clone();
        idx.insert(bag("a", &[(1, 2), (2, 1)])).unwrap();
        idx.remove(&ModelId::new("a")).unwrap();
        assert_eq!(idx, empty);
    }

    #[test]
    fn remove_decrements_shared_df() {
        let mut idx = InvertedIndex::default();
        idx.insert(bag("a", &[(1, 1)])).unwrap();
        idx.insert(bag("b", &[(1, 1), (2, 1)])).unwrap();
        idx.remove(&ModelId::new("b")).unwrap();
        assert_eq!(idx.df(WordId(1)), 1);
        assert_eq!(idx.df(WordId(2)), 0);
        assert!(matches!(
            idx.remove(&ModelId::new("zzz")),
            Err(IndexError::UnknownModel(_))
        ));
    }

    #[test]
    fn generic_marking_thresholds() {
        let mut idx = InvertedIndex::default();
        for i in 0..100 {
            let mut words = vec![(1u64, 1u32)];
            if i == 0 {
                words.push((2, 1));
            }
            idx.insert(bag(&format!("m{i}"), &words)).unwrap();
        }
        assert!(idx.clone().mark_generic(1.0).unwrap().is_empty());
        let marked = idx.mark_generic(0.25).unwrap();
        assert!(marked.contains(&WordId(1)));
        assert!(!marked.contains(&WordId(2)));
        assert_eq!(idx.weight(WordId(1)), 0.0);
        assert!(idx.weight(WordId(2)) > 0.0);
        assert!(matches!(
            idx.mark_generic(0.0),
            Err(IndexError::InvalidThreshold(_))
        ));
    }

    #[test]
    fn candidates_respect_generic_words() {
        let mut idx = InvertedIndex::default();
        idx.insert(bag("a", &[(1, 1), (2, 1)])).unwrap();
        idx.insert(bag("b", &[(1, 1), (3, 1)])).unwrap();
        assert!(idx
            .candidates(&bag("q", &[(9, 1)]), WordScope::All)
            .is_empty());
        let own = idx.candidates(&bag("q", &[(2, 1)]), WordScope::All);
        assert!(own.contains(&ModelId::new("a")));
        idx.mark_generic(0.5).unwrap();
        assert!(idx
            .candidates(&bag("q", &[(1, 1)]), WordScope::All)
            .is_empty());
    }

    #[test]
    fn idf_is_monotone_and_nonnegative() {
        let n = 50;
        let mut prev = f64::INFINITY;
        for df in 1..=n {
            let w = idf(n, df);
            assert!(w > 0.0 && w < prev);
            prev = w;
        }
        assert_eq!(idf(0, 0), 0.0);
    }

    #[test]
    fn audit_detects_tampering() {
        let mut idx = InvertedIndex::default();
        idx.insert(bag("a", &[(1, 1)])).unwrap();
        idx.audit().unwrap();
        idx.postings
            .get_mut(&WordId(1))
            .unwrap()
            .entries
            .insert(ModelId::new("ghost"), 1);
        assert!(idx.audit().is_err());
    }

    #[test]
    fn df_histogram_buckets() {
        let mut idx = InvertedIndex::default();
        for i in 0..5 {
            idx.insert(bag(&format!("m{i}"), &[(1, 1), (100 + i, 1)]))
                .unwrap();
        }
        // five words with df 1, one with df 5 (bucket 4)
        assert_eq!(idx.df_histogram(), vec![(1, 5), (4, 1)]);
        assert!(idx.stats_dump().starts_with("models 5\nwords 6\n"));
    }
}
