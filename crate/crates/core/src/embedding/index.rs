//! Flat exact-search cosine index with binary persistence.
//!
//! File layout, all integers little-endian:
//! magic `TMIX` | version u32 | dimension u32 | entry count u64 |
//! per entry: key length u32, key bytes (UTF-8), dimension x f32 |
//! trailing FNV-1a 64 checksum of every preceding byte.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use super::{cosine, fnv1a64, EmbedError, EmbeddingProvider, EmbeddingVector};

const MAGIC: &[u8; 4] = b"TMIX";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate index key: {0}")]
    DuplicateKey(String),
    #[error("query embeds to the zero vector; similarity is undefined")]
    ZeroVectorQuery,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("index file {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("index file {path}: checksum mismatch")]
    ChecksumMismatch { path: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One indexed item. The key doubles as the handle to the indexed text
/// (procedure id or chunk key); callers resolve it against their own store.
#[derive(Debug, Clone)]
pub struct IndexEntry {
    pub key: String,
    pub vector: EmbeddingVector,
}

/// Exact (non-approximate) cosine top-k over a flat entry list.
#[derive(Debug, Clone)]
pub struct FlatIndex {
    dimension: usize,
    entries: Vec<IndexEntry>,
}

impl FlatIndex {
    /// Embed and index the given (key, text) pairs. Keys must be unique.
    pub fn build(
        items: &[(String, String)],
        provider: &dyn EmbeddingProvider,
    ) -> Result<FlatIndex, IndexError> {
        let mut seen = BTreeSet::new();
        let mut entries = Vec::with_capacity(items.len());
        for (key, text) in items {
            if !seen.insert(key.clone()) {
                return Err(IndexError::DuplicateKey(key.clone()));
            }
            let vector = provider.embed(text)?;
            entries.push(IndexEntry { key: key.clone(), vector });
        }
        Ok(FlatIndex { dimension: provider.dimension(), entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Exact top-k by descending cosine, ties broken by ascending key.
    /// Excluded keys are never returned; k larger than the index clamps.
    pub fn top_k(
        &self,
        query: &EmbeddingVector,
        k: usize,
        exclude: &BTreeSet<String>,
    ) -> Result<Vec<(String, f64)>, IndexError> {
        if query.is_zero {
            return Err(IndexError::ZeroVectorQuery);
        }
        let mut scored: Vec<(String, f64)> = self
            .entries
            .iter()
            .filter(|e| !exclude.contains(&e.key))
            .map(|e| (e.key.clone(), cosine(query, &e.vector)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.0.cmp(&b.0))
        });
        scored.truncate(k);
        Ok(scored)
    }

    /// Serialize to the binary layout described at module level.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for entry in &self.entries {
            let key = entry.key.as_bytes();
            buf.extend_from_slice(&(key.len() as u32).to_le_bytes());
            buf.extend_from_slice(key);
            for v in &entry.vector.values {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let checksum = fnv1a64(&buf);
        buf.extend_from_slice(&checksum.to_le_bytes());
        buf
    }

    /// Parse the binary layout, verifying the trailing checksum.
    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<FlatIndex, IndexError> {
        let corrupt = |reason: &str| IndexError::Corrupt {
            path: path.to_string(),
            reason: reason.to_string(),
        };
        if bytes.len() < 4 + 4 + 4 + 8 + 8 {
            return Err(corrupt("truncated header"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if fnv1a64(body) != stored {
            return Err(IndexError::ChecksumMismatch { path: path.to_string() });
        }
        if &body[0..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let dimension = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(body[12..20].try_into().unwrap()) as usize;
        let mut pos = 20usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            if pos + 4 > body.len() {
                return Err(corrupt("truncated entry header"));
            }
            let key_len = u32::from_le_bytes(body[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            if pos + key_len + dimension * 4 > body.len() {
                return Err(corrupt("truncated entry"));
            }
            let key = std::str::from_utf8(&body[pos..pos + key_len])
                .map_err(|_| corrupt("key is not utf-8"))?
                .to_string();
            pos += key_len;
            let mut values = Vec::with_capacity(dimension);
            for _ in 0..dimension {
                let v = f32::from_le_bytes(body[pos..pos + 4].try_into().unwrap());
                pos += 4;
                values.push(f64::from(v));
            }
            let is_zero = values.iter().all(|v| *v == 0.0);
            entries.push(IndexEntry { key, vector: EmbeddingVector { values, is_zero } });
        }
        if pos != body.len() {
            return Err(corrupt("trailing bytes after entries"));
        }
        Ok(FlatIndex { dimension, entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        crate::jsonl::atomic_write(path, &self.to_bytes()).map_err(|e| IndexError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })
    }

    pub fn load(path: &Path) -> Result<FlatIndex, IndexError> {
        let bytes = std::fs::read(path).map_err(|e| IndexError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        FlatIndex::from_bytes(&bytes, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashedBagEmbedder;

    fn items(texts: &[(&str, &str)]) -> Vec<(String, String)> {
        texts.iter().map(|(k, t)| (k.to_string(), t.to_string())).collect()
    }

    #[test]
    fn empty_index_answers_empty() {
        let e = HashedBagEmbedder::default();
        let index = FlatIndex::build(&[], &e).unwrap();
        let q = e.embed("anything").unwrap();
        assert!(index.top_k(&q, 5, &BTreeSet::new()).unwrap().is_empty());
    }

    #[test]
    fn self_query_ranks_first_with_similarity_one() {
        let e = HashedBagEmbedder::default();
        let index = FlatIndex::build(
            &items(&[("p1", "alpha beta gamma"), ("p2", "delta epsilon"), ("p3", "zeta eta")]),
            &e,
        )
        .unwrap();
        let q = e.embed("alpha beta gamma").unwrap();
        let hits = index.top_k(&q, 1, &BTreeSet::new()).unwrap();
        assert_eq!(hits[0].0, "p1");
        assert!((hits[0].1 - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn k_clamps_to_index_size() {
        let e = HashedBagEmbedder::default();
        let index =
            FlatIndex::build(&items(&[("a", "one"), ("b", "two"), ("c", "three")]), &e).unwrap();
        let q = e.embed("one two").unwrap();
        assert_eq!(index.top_k(&q, 5, &BTreeSet::new()).unwrap().len(), 3);
    }

    #[test]
    fn excluded_keys_never_return() {
        let e = HashedBagEmbedder::default();
        let index = FlatIndex::build(&items(&[("a", "same text"), ("b", "other words")]), &e).unwrap();
        let q = e.embed("same text").unwrap();
        let exclude: BTreeSet<String> = ["a".to_string()].into();
        let hits = index.top_k(&q, 5, &exclude).unwrap();
        assert!(hits.iter().all(|(k, _)| k != "a"));
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let e = HashedBagEmbedder::default();
        let err = FlatIndex::build(&items(&[("a", "x"), ("a", "y")]), &e).unwrap_err();
        assert!(matches!(err, IndexError::DuplicateKey(k) if k == "a"));
    }

    #[test]
    fn zero_vector_query_errors() {
        let e = HashedBagEmbedder::default();
        let index = FlatIndex::build(&items(&[("a", "x")]), &e).unwrap();
        let q = e.embed("").unwrap();
        assert!(matches!(index.top_k(&q, 1, &BTreeSet::new()), Err(IndexError::ZeroVectorQuery)));
    }

    #[test]
    fn ties_break_by_ascending_key() {
        let e = HashedBagEmbedder::default();
        // identical texts -> identical similarity
        let index =
            FlatIndex::build(&items(&[("zz", "same text"), ("aa", "same text")]), &e).unwrap();
        let q = e.embed("same text").unwrap();
        let hits = index.top_k(&q, 2, &BTreeSet::new()).unwrap();
        assert_eq!(hits[0].0, "aa");
        assert_eq!(hits[1].0, "zz");
    }

    #[test]
    fn persistence_round_trip_is_bit_exact() {
        let e = HashedBagEmbedder::default();
        let index = FlatIndex::build(
            &items(&[("p1", "alpha beta"), ("p2", "gamma delta"), ("p3", "")]),
            &e,
        )
        .unwrap();
        let bytes = index.to_bytes();
        let loaded = FlatIndex::from_bytes(&bytes, "mem").unwrap();
        assert_eq!(loaded.to_bytes(), bytes);
        assert_eq!(loaded.len(), 3);
        assert!(loaded.entries()[2].vector.is_zero);
    }

    #[test]
    fn corrupted_bytes_fail_checksum() {
        let e = HashedBagEmbedder::default();
        let index = FlatIndex::build(&items(&[("p1", "alpha beta")]), &e).unwrap();
        let mut bytes = index.to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        let err = FlatIndex::from_bytes(&bytes, "mem").unwrap_err();
        assert!(matches!(err, IndexError::ChecksumMismatch { .. }));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        assert!(matches!(
            FlatIndex::from_bytes(b"TMIX", "mem"),
            Err(IndexError::Corrupt { .. })
        ));
    }
}
