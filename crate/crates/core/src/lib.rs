//! Bag-of-geometric-words search over triangle meshes.
//!
//! The crate turns mesh files into multisets of discrete geometric words,
//! keeps them in a dynamic inverted index, and answers similarity,
//! part-in-part (containment) and metadata text queries. Around that core it
//! provides a catalog with provenance, versioning, deduplication and takedown,
//! corpus diagnostics and synthetic data generators, an HTTP service and a
//! command-line front end.
//!
//! See the `examples/` directory for one runnable program per capability.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod api;
pub mod catalog;
pub mod cli;
pub mod index;
pub mod mesh;
pub mod search;
pub mod words;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use catalog::{Catalog, ModelRecord};
pub use index::InvertedIndex;
pub use mesh::{ContentHash, TriangleMesh};
pub use search::{SearchMode, SearchQuery, SearchResult};
pub use words::{build_bag, Vocabulary, WordBag, WordConfig, WordId};

/// Opaque, stable model identifier.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelId(Arc<str>);

impl ModelId {
    pub fn new(s: impl AsRef<str>) -> Self {
        ModelId(Arc::from(s.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl From<&str> for ModelId {
    fn from(s: &str) -> Self {
        ModelId::new(s)
    }
}

impl From<String> for ModelId {
    fn from(s: String) -> Self {
        ModelId(Arc::from(s))
    }
}
