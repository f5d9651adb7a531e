//! Scoring and ranking: shape similarity, part-in-part containment and
//! metadata text search.
//!
//! Rankings are deterministic: score descending, then model id ascending.
//! Models scoring exactly 0 are never returned.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{idf, InvertedIndex, WordWeights};
use crate::words::{WordBag, WordId};
use crate::ModelId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("query bag is empty")]
    EmptyQuery,
    #[error("query too generic: every query word has weight 0")]
    QueryTooGeneric,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("{0} search needs a query {1}")]
    MissingInput(SearchMode, &'static str),
}

impl SearchError {
    pub fn code(&self) -> &'static str {
        match self {
            SearchError::EmptyQuery => "empty-query",
            SearchError::QueryTooGeneric => "query-too-generic",
            SearchError::InvalidK => "invalid-k",
            SearchError::MissingInput(..) => "missing-input",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Similar,
    Pip,
    Text,
}

impl std::fmt::Display for SearchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SearchMode::Similar => "similar",
            SearchMode::Pip => "pip",
            SearchMode::Text => "text",
        })
    }
}

impl std::str::FromStr for SearchMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "similar" => Ok(SearchMode::Similar),
            "pip" => Ok(SearchMode::Pip),
            "text" => Ok(SearchMode::Text),
            _ => Err(format!("unknown search mode {s:?}")),
        }
    }
}

/// Where a model lives: hosted uploads versus crawled entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Internal,
    External,
}

/// Optional constraints; `None` means unconstrained.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Filters {
    pub watertight: Option<bool>,
    pub consistent_normals: Option<bool>,
    /// Matches a format label exactly or as a family prefix (`stl` matches `stl-binary`).
    pub filetype: Option<String>,
    pub source: Option<String>,
}

impl Filters {
    pub fn is_empty(&self) -> bool {
        *self == Filters::default()
    }

    pub fn accepts(&self, facts: &ModelFacts<'_>) -> bool {
        let tri = |want: Option<bool>, have: bool| want.is_none_or(|w| w == have);
        tri(self.watertight, facts.watertight)
            && tri(self.consistent_normals, facts.consistent_normals)
            && self.filetype.as_deref().is_none_or(|f| {
                facts.filetype == f
                    || facts
                        .filetype
                        .strip_prefix(f)
                        .is_some_and(|rest| rest.starts_with('-'))
            })
            && self
                .source
                .as_deref()
                .is_none_or(|s| facts.sources.contains(&s))
    }
}

/// What the ranker needs to know about a model beyond its bag.
#[derive(Debug, Clone)]
pub struct ModelFacts<'a> {
    pub id: &'a ModelId,
    pub watertight: bool,
    pub consistent_normals: bool,
    pub filetype: &'a str,
    pub sources: Vec<&'a str>,
    pub provenance: Provenance,
    pub name: &'a str,
    pub description: &'a str,
    pub tags: &'a [String],
}

/// Read access to the active models of a catalog.
pub trait ModelDirectory: Sync {
    fn facts(&self, id: &ModelId) -> Option<ModelFacts<'_>>;
    fn active(&self) -> Vec<ModelFacts<'_>>;
}

/// A directory that knows nothing; only unfiltered geometric queries succeed.
impl ModelDirectory for () {
    fn facts(&self, _: &ModelId) -> Option<ModelFacts<'_>> {
        None
    }
    fn active(&self) -> Vec<ModelFacts<'_>> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub mode: SearchMode,
    pub bag: Option<WordBag>,
    pub text: Option<String>,
    pub k: usize,
    pub filters: Filters,
}

impl SearchQuery {
    pub fn similar(bag: WordBag, k: usize) -> Self {
        SearchQuery {
            mode: SearchMode::Similar,
            bag: Some(bag),
            text: None,
            k,
            filters: Filters::default(),
        }
    }

    pub fn pip(bag: WordBag, k: usize) -> Self {
        SearchQuery {
            mode: SearchMode::Pip,
            ..SearchQuery::similar(bag, k)
        }
    }

    pub fn text(text: impl Into<String>, k: usize) -> Self {
        SearchQuery {
            mode: SearchMode::Text,
            bag: None,
            text: Some(text.into()),
            k,
            filters: Filters::default(),
        }
    }

    pub fn with_filters(mut self, filters: Filters) -> Self {
        self.filters = filters;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedWord {
    pub word: WordId,
    pub query_count: u32,
    pub target_count: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub model_id: ModelId,
    pub score: f64,
    pub matched: Vec<MatchedWord>,
    pub provenance: Provenance,
}

/// Merge-walk over two sorted word maps, calling `f(word, q, t)` for every
/// word present in either.
fn walk(q: &BTreeMap<WordId, u32>, t: &BTreeMap<WordId, u32>, mut f: impl FnMut(WordId, u32, u32)) {
    let mut qi = q.iter().peekable();
    let mut ti = t.iter().peekable();
    loop {
        match (qi.peek(), ti.peek()) {
            (Some(&(&qw, &qc)), Some(&(&tw, &tc))) => match qw.cmp(&tw) {
                Ordering::Less => {
                    f(qw, qc, 0);
                    qi.next();
                }
                Ordering::Greater => {
                    f(tw, 0, tc);
                    ti.next();
                }
                Ordering::Equal => {
                    f(qw, qc, tc);
                    qi.next();
                    ti.next();
                }
            },
            (Some(&(&qw, &qc)), None) => {
                f(qw, qc, 0);
                qi.next();
            }
            (None, Some(&(&tw, &tc))) => {
                f(tw, 0, tc);
                ti.next();
            }
            (None, None) => break,
        }
    }
}

/// Weighted cosine over local and global words. Symmetric, in `[0, 1]`, and
/// exactly 1 for identical bags with any nonzero weight.
pub fn score_similarity(query: &WordBag, target: &WordBag, weights: &dyn WordWeights) -> f64 {
    let mut dot = 0.0;
    let mut nq = 0.0;
    let mut nt = 0.0;
    let mut acc = |w: WordId, q: u32, t: u32| {
        let om = weights.weight(w);
        if om == 0.0 {
            return;
        }
        let (a, b) = (q as f64 * om, t as f64 * om);
        dot += a * b;
        nq += a * a;
        nt += b * b;
    };
    walk(&query.local, &target.local, &mut acc);
    walk(&query.global, &target.global, &mut acc);
    if nq == 0.0 || nt == 0.0 {
        return 0.0;
    }
    (dot / (nq * nt).sqrt()).clamp(0.0, 1.0)
}

/// Weighted fraction of the query's local words present in the target:
/// `Σ ω·min(q, t) / Σ ω·q`. Exactly 1 when the query is a sub-multiset.
pub fn score_containment(
    query: &WordBag,
    target: &WordBag,
    weights: &dyn WordWeights,
) -> Result<f64, SearchError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&w, &q) in &query.local {
        let om = weights.weight(w);
        if om == 0.0 {
            continue;
        }
        let t = target.local.get(&w).copied().unwrap_or(0);
        num += om * q.min(t) as f64;
        den += om * q as f64;
    }
    if den == 0.0 {
        return Err(SearchError::QueryTooGeneric);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

fn matched_words(
    query: &WordBag,
    target: &WordBag,
    mode: SearchMode,
    weights: &dyn WordWeights,
) -> Vec<MatchedWord> {
    let mut out = Vec::new();
    let mut push = |w: WordId, q: u32, t: u32| {
        if q > 0 && t > 0 {
            let weight = weights.weight(w);
            if weight > 0.0 {
                out.push(MatchedWord {
                    word: w,
                    query_count: q,
                    target_count: t,
                    weight,
                });
            }
        }
    };
    walk(&query.local, &target.local, &mut push);
    if mode == SearchMode::Similar {
        walk(&query.global, &target.global, &mut push);
    }
    out
}

fn rank(results: &mut Vec<SearchResult>, k: usize) {
    results.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    results.truncate(k);
}

fn check_geometric(query: &SearchQuery) -> Result<&WordBag, SearchError> {
    if query.k == 0 {
        return Err(SearchError::InvalidK);
    }
    let bag = query
        .bag
        .as_ref()
        .ok_or(SearchError::MissingInput(query.mode, "bag"))?;
    if bag.is_empty() {
        return Err(SearchError::EmptyQuery);
    }
    Ok(bag)
}

fn score_one(
    mode: SearchMode,
    query: &WordBag,
    target: &WordBag,
    weights: &dyn WordWeights,
) -> Result<f64, SearchError> {
    match mode {
        SearchMode::Pip => score_containment(query, target, weights),
        _ => Ok(score_similarity(query, target, weights)),
    }
}

/// Index-accelerated geometric search (`Similar` or `Pip`).
///
/// Scores are accumulated term-at-a-time over the posting lists of the
/// query's non-generic words, adding terms in the same order as the
/// pairwise scorers so that results are bit-identical to them.
pub fn query_geometric(
    index: &InvertedIndex,
    directory: &dyn ModelDirectory,
    query: &SearchQuery,
) -> Result<Vec<SearchResult>, SearchError> {
    let bag = check_geometric(query)?;
    let mode = query.mode;
    let mut terms: Vec<(WordId, u32, f64)> = bag
        .local
        .iter()
        .map(|(&w, &q)| (w, q, index.weight(w)))
        .collect();
    if mode == SearchMode::Similar {
        terms.extend(bag.global.iter().map(|(&w, &q)| (w, q, index.weight(w))));
    }
    terms.retain(|t| t.2 != 0.0);

    // Per-target numerator: dot product (similar) or Σ ω·min(q, t) (pip).
    let mut acc: HashMap<&ModelId, f64> = HashMap::new();
    let mut query_mass = 0.0;
    for &(w, q, om) in &terms {
        let a = q as f64 * om;
        query_mass += if mode == SearchMode::Pip {
            om * q as f64
        } else {
            a * a
        };
        let Some(posting) = index.posting(w) else {
            continue;
        };
        for (id, &t) in &posting.entries {
            let term = if mode == SearchMode::Pip {
                om * q.min(t) as f64
            } else {
                a * (t as f64 * om)
            };
            *acc.entry(id).or_insert(0.0) += term;
        }
    }
    if query_mass == 0.0 {
        return match mode {
            SearchMode::Pip => Err(SearchError::QueryTooGeneric),
            _ => Ok(Vec::new()),
        };
    }

    let mut results = Vec::new();
    for (id, num) in acc {
        let score = match mode {
            SearchMode::Pip => num / query_mass,
            _ => {
                let nt = index
                    .weighted_norm_sq(id)
                    .expect("posting targets are indexed");
                if nt == 0.0 {
                    continue;
                }
                num / (query_mass * nt).sqrt()
            }
        }
        .clamp(0.0, 1.0);
        if score <= 0.0 {
            continue;
        }
        if !query.filters.is_empty()
            && !directory
                .facts(id)
                .is_some_and(|f| query.filters.accepts(&f))
        {
            continue;
        }
        results.push(SearchResult {
            model_id: id.clone(),
            score,
            matched: Vec::new(),
            provenance: Provenance::default(),
        });
    }
    rank(&mut results, query.k);
    for r in &mut results {
        let target = index.bag(&r.model_id).expect("ranked models are indexed");
        r.matched = matched_words(bag, target, mode, index);
        r.provenance = directory
            .facts(&r.model_id)
            .map(|f| f.provenance)
            .unwrap_or_default();
    }
    Ok(results)
}

pub fn query_similar(
    index: &InvertedIndex,
    directory: &dyn ModelDirectory,
    query: &SearchQuery,
) -> Result<Vec<SearchResult>, SearchError> {
    query_geometric(
        index,
        directory,
        &SearchQuery {
            mode: SearchMode::Similar,
            ..query.clone()
        },
    )
}

pub fn query_pip(
    index: &InvertedIndex,
    directory: &dyn ModelDirectory,
    query: &SearchQuery,
) -> Result<Vec<SearchResult>, SearchError> {
    query_geometric(
        index,
        directory,
        &SearchQuery {
            mode: SearchMode::Pip,
            ..query.clone()
        },
    )
}

/// Dispatches on the query mode.
pub fn search(
    index: &InvertedIndex,
    directory: &dyn ModelDirectory,
    query: &SearchQuery,
) -> Result<Vec<SearchResult>, SearchError> {
    match query.mode {
        SearchMode::Text => {
            let text = query
                .text
                .as_deref()
                .ok_or(SearchError::MissingInput(SearchMode::Text, "string"))?;
            text_search(directory, text, query.k, &query.filters)
        }
        _ => query_geometric(index, directory, query),
    }
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Case-insensitive token match over name, description and tags; the score
/// is the fraction of distinct query tokens found.
pub fn text_search(
    directory: &dyn ModelDirectory,
    text: &str,
    k: usize,
    filters: &Filters,
) -> Result<Vec<SearchResult>, SearchError> {
    if k == 0 {
        return Err(SearchError::InvalidK);
    }
    let wanted = tokenize(text);
    if wanted.is_empty() {
        return Ok(Vec::new());
    }
    let mut results = Vec::new();
    for facts in directory.active() {
        if !filters.accepts(&facts) {
            continue;
        }
        let mut have = tokenize(facts.name);
        have.extend(tokenize(facts.description));
        for tag in facts.tags {
            have.extend(tokenize(tag));
        }
        let hits = wanted.iter().filter(|t| have.contains(*t)).count();
        if hits > 0 {
            results.push(SearchResult {
                model_id: facts.id.clone(),
                score: hits as f64 / wanted.len() as f64,
                matched: Vec::new(),
                provenance: facts.provenance,
            });
        }
    }
    rank(&mut results, k);
    Ok(results)
}

/// Exhaustive scoring of every bag in `corpus`, with weights recomputed from
/// the corpus itself. `generic` words get weight 0. Used as the reference
/// ranking for the index path.
pub fn brute_force_topk(
    corpus: &[WordBag],
    generic: &BTreeSet<WordId>,
    query: &SearchQuery,
) -> Result<Vec<SearchResult>, SearchError> {
    let bag = check_geometric(query)?;
    let mut df: HashMap<WordId, usize> = HashMap::new();
    for b in corpus {
        for w in b.local.keys().chain(b.global.keys()) {
            *df.entry(*w).or_insert(0) += 1;
        }
    }
    let n = corpus.len();
    let weights = |w: WordId| {
        if generic.contains(&w) {
            0.0
        } else {
            idf(n, df.get(&w).copied().unwrap_or(0))
        }
    };
    let mut results = Vec::new();
    for target in corpus {
        let score = score_one(query.mode, bag, target, &weights)?;
        if score > 0.0 {
            results.push(SearchResult {
                model_id: target.model_id.clone(),
                score,
                matched: matched_words(bag, target, query.mode, &weights),
                provenance: Provenance::Internal,
            });
        }
    }
    if corpus.is_empty() && query.mode == SearchMode::Pip {
        score_containment(bag, bag, &weights)?;
    }
    rank(&mut results, query.k);
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bag(id: &str, local: &[(u64, u32)]) -> WordBag {
        WordBag {
            model_id: ModelId::new(id),
            local: local.iter().map(|&(w, c)| (WordId(w), c)).collect(),
            local_total: local.iter().map(|&(_, c)| c as u64).sum(),
            ..Default::default()
        }
    }

    fn unit(_: WordId) -> f64 {
        1.0
    }

    #[test]
    fn cosine_hand_values() {
        let q = bag("q", &[(1, 1)]);
        let t = bag("t", &[(1, 1), (2, 1)]);
        assert!((score_similarity(&q, &t, &unit) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(score_similarity(&q, &q, &unit), 1.0);
        assert_eq!(score_similarity(&q, &bag("d", &[(3, 4)]), &unit), 0.0);
        assert_eq!(
            score_similarity(&q, &t, &unit),
            score_similarity(&t, &q, &unit)
        );
    }

    #[test]
    fn self_similarity_is_exact_for_irregular_weights() {
        let b = bag("a", &[(1, 3), (2, 7), (5, 1), (9, 2)]);
        let w = |w: WordId| 0.1 + (w.0 as f64).sqrt();
        assert_eq!(score_similarity(&b, &b, &w), 1.0);
    }

    #[test]
    fn containment_hand_values() {
        let q = bag("q", &[(1, 2)]);
        assert_eq!(
            score_containment(&q, &bag("t", &[(1, 1)]), &unit).unwrap(),
            0.5
        );
        assert_eq!(
            score_containment(&q, &bag("t", &[(1, 5), (2, 1)]), &unit).unwrap(),
            1.0
        );
        assert_eq!(
            score_containment(&q, &bag("t", &[(3, 5)]), &unit).unwrap(),
            0.0
        );
        let zero = |_: WordId| 0.0;
        assert_eq!(
            score_containment(&q, &q, &zero),
            Err(SearchError::QueryTooGeneric)
        );
    }

    #[test]
    fn containment_ignores_global_words() {
        let mut q = bag("q", &[(1, 1)]);
        q.global.insert(WordId(99), 1);
        assert_eq!(
            score_containment(&q, &bag("t", &[(1, 1)]), &unit).unwrap(),
            1.0
        );
    }

    #[test]
    fn brute_force_edge_cases() {
        let q = SearchQuery::similar(bag("q", &[(1, 1)]), 10);
        assert!(brute_force_topk(&[], &BTreeSet::new(), &q)
            .unwrap()
            .is_empty());
        let corpus = vec![
            bag("b", &[(1, 1)]),
            bag("a", &[(1, 1)]),
            bag("c", &[(2, 1)]),
        ];
        let r = brute_force_topk(&corpus, &BTreeSet::new(), &q).unwrap();
        // ties broken by id; the disjoint model scores 0 and is omitted
        let ids: Vec<_> = r.iter().map(|r| r.model_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn index_path_matches_brute_force() {
        let mut index = InvertedIndex::default();
        let corpus: Vec<WordBag> = (0..30u64)
            .map(|i| {
                bag(
                    &format!("m{i:02}"),
                    &[(i % 4, 1 + (i % 3) as u32), (10 + i % 7, 2), (100 + i, 1)],
                )
            })
            .collect();
        for b in &corpus {
            index.insert(b.clone()).unwrap();
        }
        for mode in [SearchMode::Similar, SearchMode::Pip] {
            for qi in [0usize, 5, 17] {
                let q = SearchQuery {
                    mode,
                    ..SearchQuery::similar(corpus[qi].clone(), 10)
                };
                let fast = query_geometric(&index, &(), &q).unwrap();
                let slow = brute_force_topk(&corpus, &BTreeSet::new(), &q).unwrap();
                assert_eq!(fast, slow);
                assert_eq!(fast[0].model_id, corpus[qi].model_id);
            }
        }
    }

    #[test]
    fn filters_tri_state() {
        let id = ModelId::new("x");
        let tags = vec![];
        let facts = ModelFacts {
            id: &id,
            watertight: false,
            consistent_normals: true,
            filetype: "stl-binary",
            sources: vec!["example.org"],
            provenance: Provenance::External,
            name: "",
            description: "",
            tags: &tags,
        };
        assert!(Filters::default().accepts(&facts));
        let f = |w, t: Option<&str>| Filters {
            watertight: w,
            filetype: t.map(String::from),
            ..Default::default()
        };
        assert!(!f(Some(true), None).accepts(&facts));
        assert!(f(Some(false), Some("stl")).accepts(&facts));
        assert!(!f(None, Some("st")).accepts(&facts));
        assert!(!f(None, Some("obj")).accepts(&facts));
    }

    #[test]
    fn tokenizer_folds_case() {
        let t = tokenize("Spur Gear 20T, gear-box");
        assert!(t.contains("gear") && t.contains("20t") && t.contains("box"));
        assert_eq!(t.len(), 4);
    }
}
