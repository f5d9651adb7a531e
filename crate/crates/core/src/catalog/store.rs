//! On-disk catalog store.
//!
//! ```text
//! <root>/CURRENT                 generation number of the live snapshot
//! <root>/gen-<n>/catalog.jsonl   catalog export
//! <root>/gen-<n>/index.bin       index file
//! <root>/blobs/<hash>.bin        original upload bytes
//! ```
//!
//! A save writes a complete new generation next to the live one and then
//! atomically replaces `CURRENT`; a crash at any point leaves either the old
//! or the new snapshot readable, never a mix.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::blobs::BlobStore;
use super::{Catalog, CatalogConfig, CatalogError};
use crate::index::InvertedIndex;
use crate::words::WordConfig;

const CURRENT: &str = "CURRENT";
const BLOBS: &str = "blobs";
const CATALOG_FILE: &str = "catalog.jsonl";
const INDEX_FILE: &str = "index.bin";

fn generation_dir(root: &Path, n: u64) -> PathBuf {
    root.join(format!("gen-{n:08}"))
}

fn write_synced(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

impl Catalog {
    /// Opens the store at `root`, or starts an empty catalog there with
    /// default settings if it holds no snapshot yet.
    pub fn open(root: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
        Catalog::open_or_create(root, CatalogConfig::default(), WordConfig::default())
    }

    /// Like [`Catalog::open`]; the configs are only used for a new store.
    pub fn open_or_create(
        root: impl AsRef<Path>,
        config: CatalogConfig,
        words: WordConfig,
    ) -> Result<Catalog, CatalogError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let blobs = BlobStore::on_disk(root.join(BLOBS))?;
        let current = root.join(CURRENT);
        let mut catalog = if current.exists() {
            let text = fs::read_to_string(&current)?;
            let n: u64 = text
                .trim()
                .parse()
                .map_err(|_| CatalogError::Storage(format!("{} is corrupt", current.display())))?;
            let dir = generation_dir(&root, n);
            let index = InvertedIndex::load(&dir.join(INDEX_FILE))?;
            let export = fs::read_to_string(dir.join(CATALOG_FILE))?;
            let mut c = Catalog::import_jsonl(&export, index, blobs)?;
            c.generation = n;
            c
        } else {
            let mut c = Catalog::new(config, words)?;
            c.blobs = blobs;
            c
        };
        catalog.root = Some(root);
        Ok(catalog)
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Number of the last saved snapshot (0 before the first save).
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Path of the live index file, if the catalog has been saved.
    pub fn index_path(&self) -> Option<PathBuf> {
        let root = self.root.as_ref()?;
        (self.generation > 0).then(|| generation_dir(root, self.generation).join(INDEX_FILE))
    }

    /// Writes a new snapshot and makes it current. Returns its generation.
    pub fn persist(&mut self) -> Result<u64, CatalogError> {
        let root = self
            .root
            .clone()
            .ok_or_else(|| CatalogError::Storage("catalog has no store directory".into()))?;
        let n = self.generation + 1;
        let target = generation_dir(&root, n);
        let staging = root.join(format!("gen-{n:08}.tmp"));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        if target.exists() {
            fs::remove_dir_all(&target)?;
        }
        fs::create_dir_all(&staging)?;
        write_synced(&staging.join(CATALOG_FILE), self.export_jsonl().as_bytes())?;
        write_synced(&staging.join(INDEX_FILE), &self.index.to_bytes())?;
        let blob_dir = root.join(BLOBS);
        self.blobs.flush_new(&blob_dir)?;
        fs::rename(&staging, &target)?;

        let tmp = root.join(format!("{CURRENT}.tmp"));
        write_synced(&tmp, format!("{n}\n").as_bytes())?;
        fs::rename(&tmp, root.join(CURRENT))?;
        self.generation = n;

        self.blobs.finish_save(&blob_dir)?;
        for entry in fs::read_dir(&root)?.flatten() {
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if name.starts_with("gen-") && entry.path() != target {
                let _ = fs::remove_dir_all(entry.path());
            }
        }
        Ok(n)
    }
}
