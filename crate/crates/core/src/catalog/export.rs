//! Line-oriented catalog export.
//!
//! The first line is a header object, `{"kind":"header","format":
//! "meshdex-catalog","version":1,...}`; every following line is one JSON
//! object whose `kind` is `model` (a [`ModelRecord`]), `versions` (a
//! [`VersionChain`]) or `freshness` (a [`FreshnessRecord`]). Records are
//! ordered by kind, then by model id or domain, so the output is
//! deterministic for a given catalog.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::blobs::BlobStore;
use super::{
    Catalog, CatalogConfig, CatalogError, Clock, FreshnessRecord, ModelRecord, VersionChain,
};
use crate::index::InvertedIndex;

pub const EXPORT_FORMAT: &str = "meshdex-catalog";
pub const EXPORT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header {
        format: String,
        version: u32,
        records: usize,
        config: CatalogConfig,
    },
    Model(ModelRecord),
    Versions(VersionChain),
    Freshness(FreshnessRecord),
}

impl Catalog {
    /// Every record (taken-down ones included), version chain and freshness
    /// record, one JSON object per line.
    pub fn export_jsonl(&self) -> String {
        let mut lines = vec![Line::Header {
            format: EXPORT_FORMAT.to_string(),
            version: EXPORT_VERSION,
            records: self.records.len(),
            config: self.config.clone(),
        }];
        lines.extend(self.records.values().cloned().map(Line::Model));
        lines.extend(self.versions.values().cloned().map(Line::Versions));
        lines.extend(self.freshness.values().cloned().map(Line::Freshness));
        let mut out = String::new();
        for line in lines {
            out.push_str(&serde_json::to_string(&line).expect("catalog lines serialize"));
            out.push('\n');
        }
        out
    }

    /// Rebuilds a catalog from an export and the index it was taken with.
    /// The result is audited before it is returned.
    pub(crate) fn import_jsonl(
        text: &str,
        index: InvertedIndex,
        blobs: BlobStore,
    ) -> Result<Catalog, CatalogError> {
        let bad = |line: usize, message: String| CatalogError::Export { line, message };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (config, declared) = match lines.next() {
            Some((n, l)) => match serde_json::from_str(l).map_err(|e| bad(n + 1, e.to_string()))? {
                Line::Header {
                    format,
                    version,
                    records,
                    config,
                } => {
                    if format != EXPORT_FORMAT {
                        return Err(bad(n + 1, format!("unknown format {format:?}")));
                    }
                    if version != EXPORT_VERSION {
                        return Err(bad(n + 1, format!("unsupported version {version}")));
                    }
                    (config, records)
                }
                _ => return Err(bad(n + 1, "first line must be the header".into())),
            },
            None => return Err(bad(1, "missing header".into())),
        };
        config.validate()?;

        let mut records = BTreeMap::new();
        let mut versions = BTreeMap::new();
        let mut freshness = BTreeMap::new();
        for (n, l) in lines {
            match serde_json::from_str(l).map_err(|e| bad(n + 1, e.to_string()))? {
                Line::Header { .. } => return Err(bad(n + 1, "repeated header".into())),
                Line::Model(r) => {
                    if records.insert(r.id.clone(), r).is_some() {
                        return Err(bad(n + 1, "duplicate model record".into()));
                    }
                }
                Line::Versions(c) => {
                    if c.versions.is_empty() {
                        return Err(bad(n + 1, "empty version chain".into()));
                    }
                    versions.insert(c.model_id.clone(), c);
                }
                Line::Freshness(f) => {
                    if f.interval_secs == 0 {
                        return Err(bad(n + 1, "recrawl interval must be positive".into()));
                    }
                    freshness.insert(f.domain.clone(), f);
                }
            }
        }
        if records.len() != declared {
            return Err(bad(
                0,
                format!(
                    "header declares {declared} records, found {}",
                    records.len()
                ),
            ));
        }
        let by_hash: HashMap<_, _> = records
            .values()
            .filter(|r| r.is_active())
            .map(|r| (r.content_hash, r.id.clone()))
            .collect();
        let catalog = Catalog {
            config,
            index,
            records,
            by_hash,
            versions,
            freshness,
            blobs,
            root: None,
            generation: 0,
            clock: Clock::system(),
            fault: None,
        };
        catalog.audit()?;
        Ok(catalog)
    }
}
