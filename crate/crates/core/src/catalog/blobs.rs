use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::mesh::ContentHash;

/// Original upload bytes keyed by content hash.
///
/// In memory until the catalog is persisted; afterwards read back from
/// `<dir>/<hex>.bin`. Deletions are recorded and applied on the next save.
#[derive(Debug, Clone, Default)]
pub(crate) struct BlobStore {
    dir: Option<PathBuf>,
    pending: BTreeMap<ContentHash, Arc<Vec<u8>>>,
    deleted: BTreeSet<ContentHash>,
    on_disk: BTreeSet<ContentHash>,
}

impl PartialEq for BlobStore {
    fn eq(&self, other: &BlobStore) -> bool {
        self.live() == other.live()
    }
}

impl BlobStore {
    pub(crate) fn on_disk(dir: PathBuf) -> std::io::Result<BlobStore> {
        std::fs::create_dir_all(&dir)?;
        let mut on_disk = BTreeSet::new();
        for entry in std::fs::read_dir(&dir)? {
            let name = entry?.file_name();
            if let Some(h) = name
                .to_str()
                .and_then(|n| n.strip_suffix(".bin"))
                .and_then(|n| n.parse().ok())
            {
                on_disk.insert(h);
            }
        }
        Ok(BlobStore {
            dir: Some(dir),
            on_disk,
            ..BlobStore::default()
        })
    }

    fn path(dir: &Path, hash: &ContentHash) -> PathBuf {
        dir.join(format!("{}.bin", hash.to_hex()))
    }

    /// Hashes whose bytes are currently retrievable.
    pub(crate) fn live(&self) -> BTreeSet<ContentHash> {
        self.on_disk
            .iter()
            .chain(self.pending.keys())
            .filter(|h| !self.deleted.contains(h))
            .copied()
            .collect()
    }

    pub(crate) fn put(&mut self, hash: ContentHash, bytes: &[u8]) {
        self.deleted.remove(&hash);
        if !self.on_disk.contains(&hash) {
            self.pending
                .entry(hash)
                .or_insert_with(|| Arc::new(bytes.to_vec()));
        }
    }

    pub(crate) fn delete(&mut self, hash: &ContentHash) {
        self.pending.remove(hash);
        if self.on_disk.contains(hash) {
            self.deleted.insert(*hash);
        }
    }

    pub(crate) fn get(&self, hash: &ContentHash) -> Option<Arc<Vec<u8>>> {
        if self.deleted.contains(hash) {
            return None;
        }
        if let Some(b) = self.pending.get(hash) {
            return Some(b.clone());
        }
        let dir = self.dir.as_ref()?;
        std::fs::read(Self::path(dir, hash)).ok().map(Arc::new)
    }

    /// Writes pending blobs into `dir` (each via a temporary file).
    pub(crate) fn flush_new(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (hash, bytes) in &self.pending {
            let path = Self::path(dir, hash);
            if path.exists() {
                continue;
            }
            let tmp = tempfile::NamedTempFile::new_in(dir)?;
            std::fs::write(tmp.path(), bytes.as_slice())?;
            tmp.persist(&path).map_err(|e| e.error)?;
        }
        Ok(())
    }

    /// Applies recorded deletions and switches to reading from `dir`. Called
    /// once the new generation is current.
    pub(crate) fn finish_save(&mut self, dir: &Path) -> std::io::Result<()> {
        for hash in std::mem::take(&mut self.deleted) {
            match std::fs::remove_file(Self::path(dir, &hash)) {
                Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e),
                _ => {}
            }
            self.on_disk.remove(&hash);
        }
        self.on_disk
            .extend(std::mem::take(&mut self.pending).into_keys());
        self.dir = Some(dir.to_path_buf());
        Ok(())
    }
}
