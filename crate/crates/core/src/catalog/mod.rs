//! Model lifecycle: ingestion, provenance and version records,
//! deduplication, takedown and recrawl scheduling.
//!
//! A [`Catalog`] owns the [`InvertedIndex`] so the two can only change
//! together: every active record has exactly one bag in the index and
//! nothing else does. Mutations are all-or-nothing.

mod blobs;
mod export;
mod store;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{EXPORT_FORMAT, EXPORT_VERSION};

use crate::index::{IndexError, InvertedIndex, PersistError, WordWeights};
use crate::mesh::{
    canonical_hash, parse_obj, parse_stl, ContentHash, MeshError, MeshStats, StlEncoding,
    TriangleMesh,
};
use crate::search::{
    self, ModelDirectory, ModelFacts, Provenance, SearchError, SearchQuery, SearchResult,
};
use crate::words::{extract, Extraction, LocalFeature, WordBag, WordConfig, WordError, WordId};
use crate::ModelId;
use blobs::BlobStore;

/// Seconds since the Unix epoch.
pub type Timestamp = u64;

/// Version of the mesh conversion code recorded on every ingest.
pub const CONVERTER_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Source location recorded for direct uploads.
pub const INTERNAL_UPLOAD: &str = "internal-upload";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error(transparent)]
    Parse(#[from] MeshError),
    #[error("unsupported file format {0:?}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Words(#[from] WordError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("unknown model {0}")]
    UnknownModel(ModelId),
    #[error("model {0} has been taken down")]
    Gone(ModelId),
    #[error("no change: content hash equals the current version of {0}")]
    NoChange(ModelId),
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("invalid catalog config: {0}")]
    InvalidConfig(String),
    #[error("injected failure at stage {0}")]
    Injected(IngestStage),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("index file: {0}")]
    Persist(#[from] PersistError),
    #[error("malformed catalog export at line {line}: {message}")]
    Export { line: usize, message: String },
    #[error("catalog audit failed: {0}")]
    Audit(String),
}

impl From<std::io::Error> for CatalogError {
    fn from(e: std::io::Error) -> Self {
        CatalogError::Storage(e.to_string())
    }
}

impl CatalogError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            CatalogError::Parse(_) => "parse-error",
            CatalogError::UnsupportedFormat(_) => "unsupported-format",
            CatalogError::Words(WordError::EmptyBag) => "empty-bag",
            CatalogError::Words(WordError::NonFiniteFeature { .. }) => "non-finite-feature",
            CatalogError::Words(WordError::InvalidConfig(_)) => "invalid-config",
            CatalogError::Index(IndexError::EmptyBag(_)) => "empty-bag",
            CatalogError::Index(_) => "index-error",
            CatalogError::Search(e) => e.code(),
            CatalogError::UnknownModel(_) => "unknown-model",
            CatalogError::Gone(_) => "gone",
            CatalogError::NoChange(_) => "no-change",
            CatalogError::InvalidSource(_) => "invalid-source",
            CatalogError::InvalidConfig(_) => "invalid-config",
            CatalogError::Injected(_) => "injected-failure",
            CatalogError::Storage(_) => "storage",
            CatalogError::Persist(e) => e.code(),
            CatalogError::Export { .. } => "malformed-export",
            CatalogError::Audit(_) => "audit",
        }
    }

    /// Whether the caller can fix the problem by changing the input.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            CatalogError::Parse(_)
                | CatalogError::UnsupportedFormat(_)
                | CatalogError::Words(WordError::EmptyBag | WordError::NonFiniteFeature { .. })
                | CatalogError::Index(IndexError::EmptyBag(_))
                | CatalogError::Search(_)
                | CatalogError::UnknownModel(_)
                | CatalogError::Gone(_)
                | CatalogError::NoChange(_)
                | CatalogError::InvalidSource(_)
        )
    }
}

/// Original file format of an ingested model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum FileFormat {
    StlBinary,
    StlAscii,
    Obj,
    Other(String),
}

impl FileFormat {
    pub fn label(&self) -> &str {
        match self {
            FileFormat::StlBinary => "stl-binary",
            FileFormat::StlAscii => "stl-ascii",
            FileFormat::Obj => "obj",
            FileFormat::Other(label) => label,
        }
    }
}

impl fmt::Display for FileFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl From<String> for FileFormat {
    fn from(s: String) -> Self {
        match s.as_str() {
            "stl-binary" => FileFormat::StlBinary,
            "stl-ascii" => FileFormat::StlAscii,
            "obj" => FileFormat::Obj,
            _ => FileFormat::Other(s),
        }
    }
}

impl From<FileFormat> for String {
    fn from(f: FileFormat) -> String {
        f.label().to_string()
    }
}

/// Which parser to use for an upload; `None` in [`Catalog::ingest`] sniffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatHint {
    Stl,
    Obj,
}

impl FormatHint {
    /// From a file name's extension. Names without an extension give `None`.
    pub fn from_name(name: &str) -> Result<Option<FormatHint>, CatalogError> {
        match std::path::Path::new(name)
            .extension()
            .and_then(|e| e.to_str())
        {
            None => Ok(None),
            Some(ext) => ext.parse().map(Some),
        }
    }
}

impl FromStr for FormatHint {
    type Err = CatalogError;
    fn from_str(s: &str) -> Result<Self, CatalogError> {
        match s.to_ascii_lowercase().as_str() {
            "stl" => Ok(FormatHint::Stl),
            "obj" => Ok(FormatHint::Obj),
            other => Err(CatalogError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Parses model bytes. Without a hint STL is tried first, then OBJ; an OBJ
/// reading is only accepted if it yields at least one triangle.
pub fn parse_model(
    bytes: &[u8],
    hint: Option<FormatHint>,
) -> Result<(TriangleMesh, FileFormat), CatalogError> {
    let stl = |bytes| {
        parse_stl(bytes).map(|(mesh, enc)| {
            let format = match enc {
                StlEncoding::Binary => FileFormat::StlBinary,
                StlEncoding::Ascii => FileFormat::StlAscii,
            };
            (mesh, format)
        })
    };
    let obj = |bytes: &[u8]| -> Result<(TriangleMesh, FileFormat), CatalogError> {
        let text = std::str::from_utf8(bytes).map_err(|e| MeshError::Syntax {
            format: "obj",
            location: crate::mesh::Location::Byte(e.valid_up_to()),
            message: "not valid UTF-8".into(),
        })?;
        Ok((parse_obj(text)?, FileFormat::Obj))
    };
    match hint {
        Some(FormatHint::Stl) => Ok(stl(bytes)?),
        Some(FormatHint::Obj) => obj(bytes),
        None => match stl(bytes) {
            Ok(found) => Ok(found),
            Err(stl_err) => match obj(bytes) {
                Ok(found) if !found.0.is_empty() => Ok(found),
                _ => Err(stl_err.into()),
            },
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceRef {
    pub domain: String,
    /// A URL, or [`INTERNAL_UPLOAD`].
    pub location: String,
}

/// Caller-supplied description of where an upload came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceMeta {
    pub domain: String,
    /// Crawl URL; `None` marks an internal upload.
    pub url: Option<String>,
    pub name: String,
    pub description: String,
    pub tags: Vec<String>,
    pub actor: String,
}

impl SourceMeta {
    pub fn new(domain: impl Into<String>) -> Self {
        SourceMeta {
            domain: domain.into(),
            ..SourceMeta::default()
        }
    }

    pub fn with_url(mut self, url: impl Into<String>) -> Self {
        self.url = Some(url.into());
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_description(mut self, text: impl Into<String>) -> Self {
        self.description = text.into();
        self
    }

    pub fn with_tags<S: Into<String>>(mut self, tags: impl IntoIterator<Item = S>) -> Self {
        self.tags = tags.into_iter().map(Into::into).collect();
        self
    }

    fn source_ref(&self) -> SourceRef {
        SourceRef {
            domain: self.domain.clone(),
            location: self
                .url
                .clone()
                .unwrap_or_else(|| INTERNAL_UPLOAD.to_string()),
        }
    }

    fn provenance(&self) -> Provenance {
        if self.url.is_some() {
            Provenance::External
        } else {
            Provenance::Internal
        }
    }

    fn actor(&self) -> String {
        if self.actor.is_empty() {
            self.domain.clone()
        } else {
            self.actor.clone()
        }
    }

    fn validate(&self) -> Result<(), CatalogError> {
        if self.domain.trim().is_empty() {
            return Err(CatalogError::InvalidSource(
                "domain must not be empty".into(),
            ));
        }
        if self.domain.chars().any(char::is_whitespace) {
            return Err(CatalogError::InvalidSource(format!(
                "domain {:?} contains whitespace",
                self.domain
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistoryAction {
    Ingest,
    Merge,
    Version,
    Takedown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub timestamp: Timestamp,
    pub action: HistoryAction,
    pub actor: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    Active,
    TakenDown,
}

/// One catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: ModelId,
    pub name: String,
    pub description: String,
    pub tags: Vec<String>,
    pub sources: Vec<SourceRef>,
    pub format: FileFormat,
    pub converter_version: String,
    pub history: Vec<HistoryEntry>,
    pub content_hash: ContentHash,
    /// Fingerprint of the indexed bag.
    pub bag_id: String,
    pub stats: MeshStats,
    pub lifecycle: Lifecycle,
    pub provenance: Provenance,
}

impl ModelRecord {
    pub fn is_active(&self) -> bool {
        self.lifecycle == Lifecycle::Active
    }

    fn facts(&self) -> ModelFacts<'_> {
        ModelFacts {
            id: &self.id,
            watertight: self.stats.watertight,
            consistent_normals: self.stats.consistent_normals,
            filetype: self.format.label(),
            sources: self.sources.iter().map(|s| s.domain.as_str()).collect(),
            provenance: self.provenance,
            name: &self.name,
            description: &self.description,
            tags: &self.tags,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionEntry {
    pub version: u32,
    pub content_hash: ContentHash,
    pub format: FileFormat,
    pub timestamp: Timestamp,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// Versions of one model, oldest first. Version numbers start at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionChain {
    pub model_id: ModelId,
    pub versions: Vec<VersionEntry>,
}

impl VersionChain {
    pub fn head(&self) -> &VersionEntry {
        self.versions.last().expect("chains are never empty")
    }
}

/// Recrawl bookkeeping for one source domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreshnessRecord {
    pub domain: String,
    pub last_ingest: Timestamp,
    pub interval_secs: u64,
}

impl FreshnessRecord {
    pub fn staleness(&self, now: Timestamp) -> u64 {
        now.saturating_sub(self.last_ingest)
    }

    pub fn is_due(&self, now: Timestamp) -> bool {
        self.staleness(now) > self.interval_secs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Duplicate {
    pub model_id: ModelId,
    pub kind: MatchKind,
    pub similarity: f64,
}

/// Points in [`Catalog::ingest`] where an injected fault can abort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IngestStage {
    Parse,
    Extract,
    Dedup,
    IndexInsert,
    Commit,
}

impl IngestStage {
    pub const ALL: [IngestStage; 5] = [
        IngestStage::Parse,
        IngestStage::Extract,
        IngestStage::Dedup,
        IngestStage::IndexInsert,
        IngestStage::Commit,
    ];
}

impl fmt::Display for IngestStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IngestStage::Parse => "parse",
            IngestStage::Extract => "extract",
            IngestStage::Dedup => "dedup",
            IngestStage::IndexInsert => "index-insert",
            IngestStage::Commit => "commit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "match")]
pub enum IngestStatus {
    Created,
    Merged(MatchKind),
    /// Same content from an already listed source.
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    #[serde(flatten)]
    pub status: IngestStatus,
    pub record: ModelRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogConfig {
    /// Minimum similarity for a geometric duplicate.
    pub dedup_threshold: f64,
    /// Merge geometric duplicates into the existing record on ingest.
    pub merge_geometric: bool,
    pub default_recrawl_secs: u64,
    /// Per-domain overrides of the recrawl interval.
    pub recrawl_secs: BTreeMap<String, u64>,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        CatalogConfig {
            dedup_threshold: 0.995,
            merge_geometric: true,
            default_recrawl_secs: 7 * 86_400,
            recrawl_secs: BTreeMap::new(),
        }
    }
}

impl CatalogConfig {
    pub fn validate(&self) -> Result<(), CatalogError> {
        if !(self.dedup_threshold > 0.0 && self.dedup_threshold <= 1.0) {
            return Err(CatalogError::InvalidConfig(format!(
                "dedup_threshold must be in (0, 1], got {}",
                self.dedup_threshold
            )));
        }
        if self.default_recrawl_secs == 0 || self.recrawl_secs.values().any(|&s| s == 0) {
            return Err(CatalogError::InvalidConfig(
                "recrawl intervals must be positive".into(),
            ));
        }
        Ok(())
    }

    fn interval_for(&self, domain: &str) -> u64 {
        self.recrawl_secs
            .get(domain)
            .copied()
            .unwrap_or(self.default_recrawl_secs)
    }
}

/// Source of "now" for history entries and freshness.
#[derive(Clone)]
pub struct Clock(Arc<dyn Fn() -> Timestamp + Send + Sync>);

impl Clock {
    pub fn system() -> Self {
        Clock(Arc::new(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        }))
    }

    pub fn fixed(at: Timestamp) -> Self {
        Clock(Arc::new(move || at))
    }

    pub fn from_fn(f: impl Fn() -> Timestamp + Send + Sync + 'static) -> Self {
        Clock(Arc::new(f))
    }

    pub fn now(&self) -> Timestamp {
        (self.0)()
    }
}

impl fmt::Debug for Clock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Clock({})", self.now())
    }
}

/// Returns `true` to abort an ingest at the given stage.
pub type FaultHook = Arc<dyn Fn(IngestStage) -> bool + Send + Sync>;

/// Corpus-level counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogStats {
    pub active_models: usize,
    pub taken_down_models: usize,
    pub sources: usize,
    pub distinct_words: usize,
    pub generic_words: usize,
    /// `(lower bound of a power-of-two df bucket, number of words)`.
    pub df_histogram: Vec<(usize, usize)>,
}

/// The model catalog and its index.
#[derive(Clone)]
pub struct Catalog {
    config: CatalogConfig,
    index: InvertedIndex,
    records: BTreeMap<ModelId, ModelRecord>,
    /// Current content hash of every active record.
    by_hash: HashMap<ContentHash, ModelId>,
    versions: BTreeMap<ModelId, VersionChain>,
    freshness: BTreeMap<String, FreshnessRecord>,
    blobs: BlobStore,
    root: Option<PathBuf>,
    generation: u64,
    clock: Clock,
    fault: Option<FaultHook>,
}

impl fmt::Debug for Catalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Catalog")
            .field("records", &self.records.len())
            .field("indexed", &self.index.len())
            .field("root", &self.root)
            .field("generation", &self.generation)
            .finish()
    }
}

/// Equality of persistent state: records, versions, freshness, blobs and
/// index. The clock, fault hook and store location are ignored.
impl PartialEq for Catalog {
    fn eq(&self, other: &Catalog) -> bool {
        self.config == other.config
            && self.records == other.records
            && self.by_hash == other.by_hash
            && self.versions == other.versions
            && self.freshness == other.freshness
            && self.blobs == other.blobs
            && self.index == other.index
    }
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog::new(CatalogConfig::default(), WordConfig::default())
            .expect("default config is valid")
    }
}

impl Catalog {
    /// An empty in-memory catalog.
    pub fn new(config: CatalogConfig, words: WordConfig) -> Result<Catalog, CatalogError> {
        config.validate()?;
        words.validate()?;
        Ok(Catalog {
            config,
            index: InvertedIndex::new(words),
            records: BTreeMap::new(),
            by_hash: HashMap::new(),
            versions: BTreeMap::new(),
            freshness: BTreeMap::new(),
            blobs: BlobStore::default(),
            root: None,
            generation: 0,
            clock: Clock::system(),
            fault: None,
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn set_clock(&mut self, clock: Clock) {
        self.clock = clock;
    }

    /// Installs (or clears) a fault-injection hook consulted at every
    /// [`IngestStage`].
    pub fn set_fault_hook(&mut self, hook: Option<FaultHook>) {
        self.fault = hook;
    }

    pub fn config(&self) -> &CatalogConfig {
        &self.config
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn get(&self, id: &ModelId) -> Option<&ModelRecord> {
        self.records.get(id)
    }

    /// The record if it is active; `Gone` or `UnknownModel` otherwise.
    pub fn active(&self, id: &ModelId) -> Result<&ModelRecord, CatalogError> {
        match self.records.get(id) {
            None => Err(CatalogError::UnknownModel(id.clone())),
            Some(r) if !r.is_active() => Err(CatalogError::Gone(id.clone())),
            Some(r) => Ok(r),
        }
    }

    /// All records, including taken-down ones, ordered by id.
    pub fn records(&self) -> impl Iterator<Item = &ModelRecord> {
        self.records.values()
    }

    /// The public listing: active records only.
    pub fn active_records(&self) -> impl Iterator<Item = &ModelRecord> {
        self.records.values().filter(|r| r.is_active())
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn versions(&self, id: &ModelId) -> Option<&VersionChain> {
        self.versions.get(id)
    }

    pub fn freshness(&self) -> impl Iterator<Item = &FreshnessRecord> {
        self.freshness.values()
    }

    /// Stored bytes of a version, if retained.
    pub fn blob(&self, hash: &ContentHash) -> Option<Arc<Vec<u8>>> {
        self.blobs.get(hash)
    }

    /// Current geometry of an active model, re-parsed from its stored bytes.
    pub fn load_mesh(&self, id: &ModelId) -> Result<TriangleMesh, CatalogError> {
        let record = self.active(id)?;
        let bytes = self
            .blobs
            .get(&record.content_hash)
            .ok_or_else(|| CatalogError::Storage(format!("stored bytes of {id} are missing")))?;
        Ok(parse_model(&bytes, Some(hint_for(&record.format)))?.0)
    }

    /// Swaps in another index (e.g. one restored from a file). It must hold
    /// exactly the active models with bags matching their records.
    pub fn replace_index(&mut self, index: InvertedIndex) -> Result<(), CatalogError> {
        let previous = std::mem::replace(&mut self.index, index);
        let mut check = self.audit();
        if check.is_ok()
            && self.index.len() != self.records.values().filter(|r| r.is_active()).count()
        {
            check = Err(CatalogError::Audit(
                "index does not cover every active model".into(),
            ));
        }
        if let Err(e) = check {
            self.index = previous;
            return Err(e);
        }
        Ok(())
    }

    fn check_fault(&self, stage: IngestStage) -> Result<(), CatalogError> {
        match &self.fault {
            Some(hook) if hook(stage) => Err(CatalogError::Injected(stage)),
            _ => Ok(()),
        }
    }

    fn extract(
        &self,
        bytes: &[u8],
        hint: Option<FormatHint>,
    ) -> Result<(TriangleMesh, FileFormat, Extraction), CatalogError> {
        let (mesh, format) = parse_model(bytes, hint)?;
        let ex = extract(&mesh, self.index.vocabulary())?;
        Ok((mesh, format, ex))
    }

    /// Bag of an uploaded query file under the catalog's vocabulary. Nothing
    /// is stored.
    pub fn query_bag(
        &self,
        bytes: &[u8],
        hint: Option<FormatHint>,
    ) -> Result<WordBag, CatalogError> {
        Ok(self.extract(bytes, hint)?.2.bag)
    }

    /// Parse, extract, deduplicate and index one file.
    ///
    /// An exact (content hash) or geometric duplicate of an active model is
    /// merged into that record by listing the new source; the same content
    /// from an already listed source changes nothing. Any error leaves the
    /// catalog and index exactly as they were.
    pub fn ingest(
        &mut self,
        bytes: &[u8],
        hint: Option<FormatHint>,
        source: &SourceMeta,
    ) -> Result<IngestOutcome, CatalogError> {
        source.validate()?;
        self.check_fault(IngestStage::Parse)?;
        let (mesh, format) = parse_model(bytes, hint)?;
        self.check_fault(IngestStage::Extract)?;
        let ex = extract(&mesh, self.index.vocabulary())?;
        let hash = canonical_hash(&mesh);
        self.check_fault(IngestStage::Dedup)?;
        let dup = self
            .find_duplicates(&hash, &ex.bag)
            .into_iter()
            .find(|d| d.kind == MatchKind::Exact || self.config.merge_geometric);
        match dup {
            Some(d) => self.merge_source(d, source),
            None => self.create(bytes, format, hash, ex, source),
        }
    }

    fn merge_source(
        &mut self,
        dup: Duplicate,
        source: &SourceMeta,
    ) -> Result<IngestOutcome, CatalogError> {
        let src = source.source_ref();
        let current = &self.records[&dup.model_id];
        if current.sources.contains(&src) {
            return Ok(IngestOutcome {
                status: IngestStatus::Unchanged,
                record: current.clone(),
            });
        }
        self.check_fault(IngestStage::IndexInsert)?;
        let now = self.clock.now();
        let mut record = current.clone();
        record.sources.push(src);
        for tag in &source.tags {
            if !record.tags.contains(tag) {
                record.tags.push(tag.clone());
            }
        }
        record.history.push(HistoryEntry {
            timestamp: now,
            action: HistoryAction::Merge,
            actor: source.actor(),
            detail: format!(
                "{} duplicate from {}",
                match dup.kind {
                    MatchKind::Exact => "exact",
                    MatchKind::Geometric => "geometric",
                },
                source.domain
            ),
        });
        self.check_fault(IngestStage::Commit)?;
        self.touch_source(&source.domain, now);
        self.records.insert(record.id.clone(), record.clone());
        Ok(IngestOutcome {
            status: IngestStatus::Merged(dup.kind),
            record,
        })
    }

    fn create(
        &mut self,
        bytes: &[u8],
        format: FileFormat,
        hash: ContentHash,
        ex: Extraction,
        source: &SourceMeta,
    ) -> Result<IngestOutcome, CatalogError> {
        let id = self.fresh_id(&hash);
        let bag = ex.bag.with_id(id.clone());
        let bag_id = bag_fingerprint(&bag);
        self.check_fault(IngestStage::IndexInsert)?;
        self.index.insert(bag)?;
        if let Err(e) = self.check_fault(IngestStage::Commit) {
            self.index.remove(&id).expect("just inserted");
            return Err(e);
        }

        let now = self.clock.now();
        let record = ModelRecord {
            id: id.clone(),
            name: source.name.clone(),
            description: source.description.clone(),
            tags: source.tags.clone(),
            sources: vec![source.source_ref()],
            format: format.clone(),
            converter_version: CONVERTER_VERSION.to_string(),
            history: vec![HistoryEntry {
                timestamp: now,
                action: HistoryAction::Ingest,
                actor: source.actor(),
                detail: String::new(),
            }],
            content_hash: hash,
            bag_id,
            stats: ex.stats,
            lifecycle: Lifecycle::Active,
            provenance: source.provenance(),
        };
        self.versions.insert(
            id.clone(),
            VersionChain {
                model_id: id.clone(),
                versions: vec![VersionEntry {
                    version: 1,
                    content_hash: hash,
                    format,
                    timestamp: now,
                    note: String::new(),
                }],
            },
        );
        self.blobs.put(hash, bytes);
        self.by_hash.insert(hash, id.clone());
        self.touch_source(&source.domain, now);
        self.records.insert(id, record.clone());
        Ok(IngestOutcome {
            status: IngestStatus::Created,
            record,
        })
    }

    /// `m-` and the first 12 hex digits of the content hash, with a numeric
    /// suffix if that id was used before.
    fn fresh_id(&self, hash: &ContentHash) -> ModelId {
        let base = format!("m-{}", &hash.to_hex()[..12]);
        let mut id = ModelId::new(&base);
        let mut n = 2;
        while self.records.contains_key(&id) {
            id = ModelId::new(format!("{base}-{n}"));
            n += 1;
        }
        id
    }

    fn touch_source(&mut self, domain: &str, now: Timestamp) {
        let interval = self.config.interval_for(domain);
        let rec = self
            .freshness
            .entry(domain.to_string())
            .or_insert_with(|| FreshnessRecord {
                domain: domain.to_string(),
                last_ingest: now,
                interval_secs: interval,
            });
        rec.last_ingest = rec.last_ingest.max(now);
    }

    /// Active models matching `hash` exactly or, failing that, models whose
    /// similarity to `bag` reaches the dedup threshold (best first).
    pub fn find_duplicates(&self, hash: &ContentHash, bag: &WordBag) -> Vec<Duplicate> {
        if let Some(id) = self.by_hash.get(hash) {
            return vec![Duplicate {
                model_id: id.clone(),
                kind: MatchKind::Exact,
                similarity: 1.0,
            }];
        }
        let threshold = self.config.dedup_threshold;
        let mut found: Vec<Duplicate> = self
            .dedup_candidates(bag, threshold)
            .into_iter()
            .filter_map(|id| {
                let target = self.index.bag(&id)?;
                let s = search::score_similarity(bag, target, &self.index);
                (s >= threshold).then_some(Duplicate {
                    model_id: id,
                    kind: MatchKind::Geometric,
                    similarity: s,
                })
            })
            .collect();
        found.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| a.model_id.cmp(&b.model_id))
        });
        found
    }

    /// Prefix filter for cosine ≥ `threshold`: a target missing query words
    /// of squared weighted mass `m` scores at most `sqrt(1 − m / total)`, so
    /// it must share at least one word of any prefix whose mass exceeds
    /// `(1 − threshold²)·total`. Rare words come first to keep the union of
    /// posting lists small.
    fn dedup_candidates(&self, bag: &WordBag, threshold: f64) -> BTreeSet<ModelId> {
        let mut terms: Vec<(usize, f64, WordId)> = bag
            .local
            .iter()
            .chain(&bag.global)
            .filter_map(|(&w, &c)| {
                let om = self.index.weight(w);
                (om > 0.0).then(|| (self.index.df(w), (c as f64 * om).powi(2), w))
            })
            .collect();
        let total: f64 = terms.iter().map(|t| t.1).sum();
        let mut out = BTreeSet::new();
        if total == 0.0 {
            return out;
        }
        terms.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
        let budget = (1.0 - threshold * threshold) * total * (1.0 + 1e-9);
        let mut mass = 0.0;
        for (_, m, w) in terms {
            if let Some(p) = self.index.posting(w) {
                out.extend(p.entries.keys().cloned());
            }
            mass += m;
            if mass > budget {
                break;
            }
        }
        out
    }

    /// Replaces an active model's geometry with a new version. The previous
    /// bytes are kept.
    pub fn record_version(
        &mut self,
        id: &ModelId,
        bytes: &[u8],
        hint: Option<FormatHint>,
        note: &str,
    ) -> Result<VersionChain, CatalogError> {
        let old_hash = self.active(id)?.content_hash;
        let (mesh, format, ex) = self.extract(bytes, hint)?;
        let hash = canonical_hash(&mesh);
        if hash == old_hash {
            return Err(CatalogError::NoChange(id.clone()));
        }
        let bag = ex.bag.with_id(id.clone());
        let bag_id = bag_fingerprint(&bag);
        let old_bag = self.index.remove(id)?;
        if let Err(e) = self.index.insert(bag) {
            self.index
                .insert(old_bag)
                .expect("restoring the previous bag");
            return Err(e.into());
        }

        let now = self.clock.now();
        let chain = self
            .versions
            .get_mut(id)
            .expect("active records have a chain");
        let version = chain.head().version + 1;
        chain.versions.push(VersionEntry {
            version,
            content_hash: hash,
            format: format.clone(),
            timestamp: now,
            note: note.to_string(),
        });
        let chain = chain.clone();

        let record = self.records.get_mut(id).expect("checked active");
        record.content_hash = hash;
        record.format = format;
        record.stats = ex.stats;
        record.bag_id = bag_id;
        record.converter_version = CONVERTER_VERSION.to_string();
        record.history.push(HistoryEntry {
            timestamp: now,
            action: HistoryAction::Version,
            actor: record.sources[0].domain.clone(),
            detail: format!("version {version}"),
        });
        if self.by_hash.get(&old_hash) == Some(id) {
            self.by_hash.remove(&old_hash);
        }
        self.by_hash.entry(hash).or_insert_with(|| id.clone());
        self.blobs.put(hash, bytes);
        Ok(chain)
    }

    /// Removes a model from every search surface. The record stays for
    /// audit; stored bytes of external models are deleted.
    pub fn take_down(&mut self, id: &ModelId, actor: &str) -> Result<(), CatalogError> {
        let hash = self.active(id)?.content_hash;
        self.index.remove(id)?;
        let now = self.clock.now();
        let record = self.records.get_mut(id).expect("checked active");
        record.lifecycle = Lifecycle::TakenDown;
        record.history.push(HistoryEntry {
            timestamp: now,
            action: HistoryAction::Takedown,
            actor: actor.to_string(),
            detail: String::new(),
        });
        let external = record.provenance == Provenance::External;
        if self.by_hash.get(&hash) == Some(id) {
            self.by_hash.remove(&hash);
        }
        if external {
            let hashes: Vec<ContentHash> = self.versions[id]
                .versions
                .iter()
                .map(|v| v.content_hash)
                .collect();
            for h in hashes {
                if !self.blob_in_use(&h, id) {
                    self.blobs.delete(&h);
                }
            }
        }
        Ok(())
    }

    fn blob_in_use(&self, hash: &ContentHash, except: &ModelId) -> bool {
        self.versions.iter().any(|(id, chain)| {
            id != except
                && self.records[id].is_active()
                && chain.versions.iter().any(|v| v.content_hash == *hash)
        })
    }

    /// Domains whose staleness exceeds their interval, most stale first.
    pub fn due_for_recrawl(&self, now: Timestamp) -> Vec<String> {
        let mut due: Vec<&FreshnessRecord> =
            self.freshness.values().filter(|f| f.is_due(now)).collect();
        due.sort_by(|a, b| {
            b.staleness(now)
                .cmp(&a.staleness(now))
                .then_with(|| a.domain.cmp(&b.domain))
        });
        due.into_iter().map(|f| f.domain.clone()).collect()
    }

    /// Runs any query against the active models.
    pub fn search(&self, query: &SearchQuery) -> Result<Vec<SearchResult>, SearchError> {
        search::search(&self.index, self, query)
    }

    /// Top-`k` models most similar to an active model, excluding itself.
    pub fn related(&self, id: &ModelId, k: usize) -> Result<Vec<SearchResult>, CatalogError> {
        self.active(id)?;
        let bag = self
            .index
            .bag(id)
            .expect("active models are indexed")
            .clone();
        let mut hits = search::query_similar(&self.index, self, &SearchQuery::similar(bag, k + 1))?;
        hits.retain(|r| &r.model_id != id);
        hits.truncate(k);
        Ok(hits)
    }

    /// Marks high-df words generic; see [`InvertedIndex::mark_generic`].
    pub fn mark_generic(&mut self, threshold: f64) -> Result<BTreeSet<WordId>, CatalogError> {
        Ok(self.index.mark_generic(threshold)?)
    }

    /// Splits a local word, re-deriving features from stored geometry.
    pub fn split_generic_word(&mut self, word: WordId) -> Result<Vec<WordId>, CatalogError> {
        let source = BlobFeatures {
            records: &self.records,
            blobs: &self.blobs,
            words: self.index.vocabulary().config.clone(),
        };
        let synonyms = self.index.split_generic_word(word, &source)?;
        for record in self.records.values_mut() {
            if let Some(bag) = self.index.bag(&record.id) {
                record.bag_id = bag_fingerprint(bag);
            }
        }
        Ok(synonyms)
    }

    pub fn stats(&self) -> CatalogStats {
        let active = self.records.values().filter(|r| r.is_active()).count();
        CatalogStats {
            active_models: active,
            taken_down_models: self.records.len() - active,
            sources: self.freshness.len(),
            distinct_words: self.index.word_count(),
            generic_words: self.index.generic_words().len(),
            df_histogram: self.index.df_histogram(),
        }
    }

    /// Full consistency check of catalog against index.
    pub fn audit(&self) -> Result<(), CatalogError> {
        let fail = |m: String| Err(CatalogError::Audit(m));
        self.index.audit()?;
        for id in self.index.model_ids() {
            match self.records.get(id) {
                Some(r) if r.is_active() => {}
                Some(_) => return fail(format!("taken-down model {id} is indexed")),
                None => return fail(format!("indexed model {id} has no record")),
            }
        }
        for (id, r) in &self.records {
            if &r.id != id {
                return fail(format!("record keyed {id} carries id {}", r.id));
            }
            if r.is_active() != self.index.contains(id) {
                return fail(format!(
                    "index presence of {id} disagrees with its lifecycle"
                ));
            }
            let Some(chain) = self.versions.get(id) else {
                return fail(format!("{id} has no version chain"));
            };
            if chain.head().content_hash != r.content_hash {
                return fail(format!("{id}: record hash differs from version head"));
            }
            for pair in chain.versions.windows(2) {
                if pair[1].version <= pair[0].version
                    || pair[1].content_hash == pair[0].content_hash
                {
                    return fail(format!("{id}: version chain out of order"));
                }
            }
            if r.sources.is_empty() {
                return fail(format!("{id} lists no source"));
            }
            if r.is_active() {
                if let Some(bag) = self.index.bag(id) {
                    if bag_fingerprint(bag) != r.bag_id {
                        return fail(format!("{id}: bag id does not match the indexed bag"));
                    }
                }
            }
        }
        for (hash, id) in &self.by_hash {
            match self.records.get(id) {
                Some(r) if r.is_active() && r.content_hash == *hash => {}
                _ => return fail(format!("hash entry {hash} -> {id} is stale")),
            }
        }
        if self.versions.len() != self.records.len() {
            return fail("version chains without records".into());
        }
        Ok(())
    }
}

impl ModelDirectory for Catalog {
    fn facts(&self, id: &ModelId) -> Option<ModelFacts<'_>> {
        self.records
            .get(id)
            .filter(|r| r.is_active())
            .map(ModelRecord::facts)
    }

    fn active(&self) -> Vec<ModelFacts<'_>> {
        self.active_records().map(ModelRecord::facts).collect()
    }
}

/// Fingerprint of a bag's word counts.
pub fn bag_fingerprint(bag: &WordBag) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(&Sha256::digest(bag.dump().as_bytes())[..8])
}

fn hint_for(format: &FileFormat) -> FormatHint {
    match format {
        FileFormat::Obj => FormatHint::Obj,
        _ => FormatHint::Stl,
    }
}

struct BlobFeatures<'a> {
    records: &'a BTreeMap<ModelId, ModelRecord>,
    blobs: &'a BlobStore,
    words: WordConfig,
}

impl crate::index::FeatureSource for BlobFeatures<'_> {
    fn features(&self, model: &ModelId) -> Result<Vec<LocalFeature>, String> {
        let record = self.records.get(model).ok_or("no record")?;
        let bytes = self
            .blobs
            .get(&record.content_hash)
            .ok_or("stored bytes are missing")?;
        let (mesh, _) =
            parse_model(&bytes, Some(hint_for(&record.format))).map_err(|e| e.to_string())?;
        let vocab = crate::words::Vocabulary::new(self.words.clone());
        extract(&mesh, &vocab)
            .map(|e| e.features)
            .map_err(|e| e.to_string())
    }
}
