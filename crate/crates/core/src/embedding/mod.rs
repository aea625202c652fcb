//! Embedding provider contract, the deterministic offline embedder, and the
//! flat cosine index.

mod index;
mod remote;

pub use index::{FlatIndex, IndexEntry, IndexError};
pub use remote::RemoteEmbedder;

use thiserror::Error;

use crate::text::tokenize;

/// Default bucket count for the deterministic embedder.
pub const HASHED_BAG_DIM: usize = 1024;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("embedding provider returned dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// An L2-normalized embedding. `is_zero` flags the empty-text case, where
/// normalization is undefined and every component is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub is_zero: bool,
}

impl EmbeddingVector {
    /// Build from raw components, normalizing to unit L2 norm. An all-zero
    /// input yields the flagged zero vector.
    pub fn normalized(mut values: Vec<f64>) -> EmbeddingVector {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return EmbeddingVector { values, is_zero: true };
        }
        for v in &mut values {
            *v /= norm;
        }
        EmbeddingVector { values, is_zero: false }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// Cosine similarity. Evaluation order is fixed (single left-to-right pass),
/// so `cosine(x, y)` and `cosine(y, x)` are bit-identical. A zero operand
/// yields 0.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    debug_assert_eq!(a.values.len(), b.values.len());
    let mut dot = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        dot += x * y;
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Pluggable text-embedding backend. The same provider is used for procedure
/// similarity and chunk ranking unless configured otherwise.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier recorded in config echoes.
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Same text in, identical vector out. Empty text yields the flagged
    /// zero vector rather than an error.
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// The deterministic offline embedder: lowercase, tokenize on maximal runs
/// of ASCII alphanumerics, hash each token (FNV-1a 64) into one of `dim`
/// buckets, accumulate counts, L2-normalize. Bit-reproducible everywhere.
#[derive(Debug, Clone)]
pub struct HashedBagEmbedder {
    dim: usize,
}

impl Default for HashedBagEmbedder {
    fn default() -> Self {
        HashedBagEmbedder { dim: HASHED_BAG_DIM }
    }
}

impl HashedBagEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedder dimension must be positive");
        HashedBagEmbedder { dim }
    }

    /// Bucket a single token the way `embed` does; exposed so tests can
    /// verify a vocabulary is collision-free.
    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.dim as u64) as usize
    }
}

impl EmbeddingProvider for HashedBagEmbedder {
    fn id(&self) -> &str {
        "hashed-bag-v1"
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut counts = vec![0.0f64; self.dim];
        for token in tokenize(text) {
            counts[self.bucket(&token)] += 1.0;
        }
        Ok(EmbeddingVector::normalized(counts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    /// Exact bag-of-words cosine, computed without hashing. Test oracle for
    /// the deterministic provider on collision-free token sets.
    pub(crate) fn bag_of_words_cosine(a: &str, b: &str) -> f64 {
        let count = |text: &str| {
            let mut m: HashMap<String, f64> = HashMap::new();
            for t in tokenize(text) {
                *m.entry(t).or_insert(0.0) += 1.0;
            }
            m
        };
        let ca = count(a);
        let cb = count(b);
        let dot: f64 = ca.iter().map(|(t, n)| n * cb.get(t).copied().unwrap_or(0.0)).sum();
        let na: f64 = ca.values().map(|n| n * n).sum::<f64>().sqrt();
        let nb: f64 = cb.values().map(|n| n * n).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    #[test]
    fn embed_is_deterministic() {
        let e = HashedBagEmbedder::default();
        let a = e.embed("MuddyWater has performed credential dumping").unwrap();
        let b = e.embed("MuddyWater has performed credential dumping").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_text_is_flagged_zero_vector() {
        let e = HashedBagEmbedder::default();
        let v = e.embed("").unwrap();
        assert!(v.is_zero);
        assert!(v.values.iter().all(|x| *x == 0.0));
        let w = e.embed("   ~~ ").unwrap();
        assert!(w.is_zero);
    }

    #[test]
    fn normalized_vectors_have_unit_norm() {
        let e = HashedBagEmbedder::default();
        let v = e.embed("alpha beta gamma alpha").unwrap();
        assert!((v.norm() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn shared_token_cosine_matches_oracle() {
        // "a b" vs "a c" -> 0.5 absent bucket collisions
        let e = HashedBagEmbedder::default();
        for (x, y) in [("a b", "a c"), ("alpha beta", "alpha gamma"), ("x
 y z", "x")] {
            let mut buckets: Vec<usize> = tokenize(x)
                .into_iter()
                .chain(tokenize(y))
                .map(|t| e.bucket(&t))
                .collect();
            buckets.sort_unstable();
            buckets.dedup();
            let mut tokens: Vec<String> = tokenize(x).into_iter().chain(tokenize(y)).collect();
            tokens.sort();
            tokens.dedup();
            assert_eq!(buckets.len(), tokens.len(), "collision in test vocabulary");

            let got = cosine(&e.embed(x).unwrap(), &e.embed(y).unwrap());
            let want = bag_of_words_cosine(x, y);
            assert!((got - want).abs() <= 1e-9, "{x:?} vs {y:?}: {got} != {want}");
        }
        let got = cosine(&e.embed("a b").unwrap(), &e.embed("a c").unwrap());
        assert!((got - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn disjoint_tokens_are_orthogonal() {
        let e = HashedBagEmbedder::default();
        let a = e.embed("alpha beta").unwrap();
        let b = e.embed("gamma delta").unwrap();
        // distinct buckets for this vocabulary, checked in the test above
        assert_eq!(cosine(&a, &b), 0.0);
    }

    #[test]
    fn cosine_is_exactly_symmetric_and_reflexive() {
        let e = HashedBagEmbedder::default();
        let a = e.embed("the quick brown fox jumps").unwrap();
        let b = e.embed("the slow brown dog sleeps").unwrap();
        assert_eq!(cosine(&a, &b).to_bits(), cosine(&b, &a).to_bits());
        assert!((cosine(&a, &a) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }
}
