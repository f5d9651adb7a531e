//! Single-file index persistence.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "GW3DIDX\0"  u32 version
//! section*     u8 tag, u64 length, payload
//! [u8; 32]     SHA-256 of every preceding byte
//! ```
//!
//! Sections, in order: 1 config (JSON), 2 forward bags, 3 postings (model
//! references are ordinals into the forward section, so a model id appears
//! exactly once in the file), 4 generic set, 5 split registry.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{InvertedIndex, PostingList};
use crate::words::{Vocabulary, WordBag, WordConfig, WordId, WordKind};
use crate::ModelId;

pub const MAGIC: &[u8; 8] = b"GW3DIDX\0";
pub const FORMAT_VERSION: u32 = 1;

const TAG_CONFIG: u8 = 1;
const TAG_FORWARD: u8 = 2;
const TAG_POSTINGS: u8 = 3;
const TAG_GENERIC: u8 = 4;
const TAG_SPLITS: u8 = 5;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported index format version {found} (expected {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("index checksum mismatch")]
    Checksum,
    #[error("malformed index: {0}")]
    Malformed(String),
}

impl PersistError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            PersistError::Io(_) => "io",
            PersistError::BadMagic => "bad-magic",
            PersistError::UnsupportedVersion { .. } => "version-mismatch",
            PersistError::Checksum => "checksum",
            PersistError::Malformed(_) => "malformed",
        }
    }
}

struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len32(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("section element count fits in u32"));
    }
    fn str(&mut self, s: &str) {
        self.len32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn section(&mut self, tag: u8, body: Out) {
        self.u8(tag);
        self.u64(body.0.len() as u64);
        self.0.extend_from_slice(&body.0);
    }
}

struct In<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> In<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                PersistError::Malformed(format!("unexpected end at byte {}", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, PersistError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<&'a str, PersistError> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|e| PersistError::Malformed(e.to_string()))
    }
    fn section(&mut self, tag: u8) -> Result<In<'a>, PersistError> {
        let found = self.u8()?;
        if found != tag {
            return Err(PersistError::Malformed(format!(
                "expected section {tag}, found {found}"
            )));
        }
        let len = usize::try_from(self.u64()?)
            .map_err(|_| PersistError::Malformed("section too long".into()))?;
        Ok(In {
            buf: self.take(len)?,
            pos: 0,
        })
    }
    fn finish(&self) -> Result<(), PersistError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(PersistError::Malformed(format!(
                "{} trailing bytes in section",
                self.buf.len() - self.pos
            )))
        }
    }
}

fn write_words(out: &mut Out, words: &BTreeMap<WordId, u32>) {
    out.len32(words.len());
    for (w, c) in words {
        out.u64(w.0);
        out.u32(*c);
    }
}

fn read_words(r: &mut In) -> Result<BTreeMap<WordId, u32>, PersistError> {
    let n = r.u32()?;
    let mut words = BTreeMap::new();
    for _ in 0..n {
        let w = WordId(r.u64()?);
        let c = r.u32()?;
        if c == 0 || words.insert(w, c).is_some() {
            return Err(PersistError::Malformed(format!("bad word entry {w}")));
        }
    }
    Ok(words)
}

fn write_levels(out: &mut Out, levels: &BTreeMap<WordId, u8>) {
    out.len32(levels.len());
    for (w, l) in levels {
        out.u64(w.0);
        out.u8(*l);
    }
}

fn read_levels(r: &mut In) -> Result<BTreeMap<WordId, u8>, PersistError> {
    let n = r.u32()?;
    let mut levels = BTreeMap::new();
    for _ in 0..n {
        let w = WordId(r.u64()?);
        levels.insert(w, r.u8()?);
    }
    Ok(levels)
}

impl InvertedIndex {
    /// Serializes the whole index, including vocabulary and generic set.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Out(Vec::new());
        out.0.extend_from_slice(MAGIC);
        out.u32(FORMAT_VERSION);

        let mut config = Out(Vec::new());
        config.0 = serde_json::to_vec(&self.vocab.config).expect("config serializes");
        out.section(TAG_CONFIG, config);

        let ordinals: HashMap<&ModelId, u32> = self
            .forward
            .keys()
            .enumerate()
            .map(|(i, id)| (id, i as u32))
            .collect();
        let mut fwd = Out(Vec::new());
        fwd.len32(self.forward.len());
        for bag in self.forward.values() {
            fwd.str(bag.model_id.as_str());
            fwd.u64(bag.local_total);
            fwd.u8(u8::from(bag.had_degenerates) | u8::from(bag.had_boundary) << 1);
            write_words(&mut fwd, &bag.local);
            write_words(&mut fwd, &bag.global);
        }
        out.section(TAG_FORWARD, fwd);

        let mut words: Vec<&PostingList> = self.postings.values().collect();
        words.sort_by_key(|p| p.word);
        let mut post = Out(Vec::new());
        post.len32(words.len());
        for p in words {
            post.u64(p.word.0);
            post.u8(match p.kind {
                WordKind::Local => 0,
                WordKind::Global => 1,
            });
            post.len32(p.entries.len());
            for (model, count) in &p.entries {
                post.u32(ordinals[model]);
                post.u32(*count);
            }
        }
        out.section(TAG_POSTINGS, post);

        let mut generic = Out(Vec::new());
        generic.len32(self.generic.len());
        for w in &self.generic {
            generic.u64(w.0);
        }
        out.section(TAG_GENERIC, generic);

        let mut splits = Out(Vec::new());
        write_levels(&mut splits, self.vocab.splits());
        write_levels(&mut splits, self.vocab.synonyms());
        out.section(TAG_SPLITS, splits);

        let digest = Sha256::digest(&out.0);
        out.0.extend_from_slice(&digest);
        out.0
    }

    /// Parses an index. Magic, version and checksum are verified before any
    /// content is decoded, and the decoded postings must agree with the bags.
    pub fn from_bytes(bytes: &[u8]) -> Result<InvertedIndex, PersistError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(PersistError::BadMagic);
        }
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(PersistError::Checksum);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(PersistError::UnsupportedVersion { found: version });
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(PersistError::Checksum);
        }

        let mut r = In { buf: body, pos: 12 };
        let cfg_section = r.section(TAG_CONFIG)?;
        let config: WordConfig = serde_json::from_slice(cfg_section.buf)
            .map_err(|e| PersistError::Malformed(format!("config: {e}")))?;

        let mut fwd = r.section(TAG_FORWARD)?;
        let n = fwd.u32()?;
        let mut forward = BTreeMap::new();
        let mut ids = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let id = ModelId::new(fwd.str()?);
            let local_total = fwd.u64()?;
            let flags = fwd.u8()?;
            let local = read_words(&mut fwd)?;
            let global = read_words(&mut fwd)?;
            let bag = WordBag {
                model_id: id.clone(),
                local,
                global,
                local_total,
                had_degenerates: flags & 1 != 0,
                had_boundary: flags & 2 != 0,
            };
            if forward.insert(id.clone(), bag).is_some() {
                return Err(PersistError::Malformed(format!("duplicate model {id}")));
            }
            ids.push(id);
        }
        fwd.finish()?;

        let mut post = r.section(TAG_POSTINGS)?;
        let n = post.u32()?;
        let mut postings = HashMap::with_capacity(n as usize);
        for _ in 0..n {
            let word = WordId(post.u64()?);
            let kind = match post.u8()? {
                0 => WordKind::Local,
                1 => WordKind::Global,
                k => return Err(PersistError::Malformed(format!("word kind {k}"))),
            };
            let m = post.u32()?;
            let mut entries = BTreeMap::new();
            for _ in 0..m {
                let ord = post.u32()? as usize;
                let id = ids
                    .get(ord)
                    .ok_or_else(|| PersistError::Malformed(format!("model ordinal {ord}")))?;
                entries.insert(id.clone(), post.u32()?);
            }
            postings.insert(
                word,
                PostingList {
                    word,
                    kind,
                    entries,
                },
            );
        }
        post.finish()?;

        let mut gen = r.section(TAG_GENERIC)?;
        let n = gen.u32()?;
        let mut generic = BTreeSet::new();
        for _ in 0..n {
            generic.insert(WordId(gen.u64()?));
        }
        gen.finish()?;

        let mut sp = r.section(TAG_SPLITS)?;
        let splits = read_levels(&mut sp)?;
        let synonyms = read_levels(&mut sp)?;
        sp.finish()?;
        r.finish()?;

        let index = InvertedIndex {
            vocab: Vocabulary::from_parts(config, splits, synonyms),
            forward,
            postings,
            generic,
            norms: Default::default(),
        };
        index
            .audit()
            .map_err(|e| PersistError::Malformed(e.to_string()))?;
        Ok(index)
    }

    /// Writes atomically: a temporary file in the same directory is renamed
    /// over `path` once fully written and synced.
    pub fn save(&self, path: &Path) -> Result<(), PersistError> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&self.to_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| PersistError::Io(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<InvertedIndex, PersistError> {
        InvertedIndex::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::tests::bag;

    fn sample() -> InvertedIndex {
        let mut idx = InvertedIndex::default();
        for i in 0..20u64 {
            let mut b = bag(
                &format!("model-{i}"),
                &[(1, 1), (10 + i % 3, 2), (100 + i, 1)],
            );
            b.global.insert(WordId(7_000 + i % 2), 1);
            b.had_boundary = i % 2 == 0;
            idx.insert(b).unwrap();
        }
        idx.mark_generic(0.25).unwrap();
        idx
    }

    #[test]
    fn round_trip_is_deep_equal() {
        let idx = sample();
        let back = InvertedIndex::from_bytes(&idx.to_bytes()).unwrap();
        assert_eq!(back, idx);
        assert!(!back.generic_words().is_empty());
    }

    #[test]
    fn header_is_bit_exact() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..8], b"GW3DIDX\0");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
    }

    #[test]
    fn truncation_is_a_checksum_error() {
        let bytes = sample().to_bytes();
        let err = InvertedIndex::from_bytes(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(matches!(err, PersistError::Checksum), "{err}");
    }

    #[test]
    fn flipped_byte_is_a_checksum_error() {
        let mut bytes = sample().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(
            InvertedIndex::from_bytes(&bytes),
            Err(PersistError::Checksum)
        ));
    }

    #[test]
    fn future_version_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        let err = InvertedIndex::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, PersistError::UnsupportedVersion { found: 2 }));
        assert_eq!(err.code(), "version-mismatch");
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(matches!(
            InvertedIndex::from_bytes(b"NOTANIDXxxxx"),
            Err(PersistError::BadMagic)
        ));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.gw3");
        let idx = sample();
        idx.save(&path).unwrap();
        assert_eq!(InvertedIndex::load(&path).unwrap(), idx);
    }
}
