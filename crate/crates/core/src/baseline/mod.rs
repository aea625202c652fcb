//! Desk-scale multi-label baseline: TF-IDF features into 14 independent
//! sigmoid heads trained with mini-batch gradient descent on binary
//! cross-entropy. Trains on curated descriptions only; procedures are never
//! part of training.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabeledDescription;
use crate::embedding::fnv1a64;
use crate::tactic::Tactic;
use crate::text::tokenize;

const MODEL_MAGIC: &[u8; 4] = b"TMML";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("cannot fit a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("description {attack_id} carries no tactic labels")]
    UnlabeledDescription { attack_id: String },
    #[error("training aborted: non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },
    #[error("model file {path}: {reason}")]
    CorruptModel { path: String, reason: String },
    #[error("model file {path}: checksum mismatch")]
    ChecksumMismatch { path: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Training hyperparameters. The recorded defaults mirror the reference
/// protocol; the learning rate is exposed because a linear model's loss
/// surface differs from a transformer's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 16, epochs: 30, learning_rate: 5e-5, seed: 1106 }
    }
}

/// Deterministic TF-IDF vocabulary: lowercased alphanumeric tokens with
/// document frequency >= 1, ordered lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<f64>,
    n_docs: u64,
}

pub type SparseVec = Vec<(usize, f64)>;

pub fn fit_vocabulary(texts: &[&str]) -> Result<Vocabulary, BaselineError> {
    if texts.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    let mut df: BTreeMap<String, u64> = BTreeMap::new();
    for text in texts {
        let unique: BTreeSet<String> = tokenize(text).into_iter().collect();
        for term in unique {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    let n_docs = texts.len() as u64;
    let mut terms = Vec::with_capacity(df.len());
    let mut idf = Vec::with_capacity(df.len());
    for (term, count) in df {
        idf.push(((1.0 + n_docs as f64) / (1.0 + count as f64)).ln() + 1.0);
        terms.push(term);
    }
    let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(Vocabulary { terms, index, idf, n_docs })
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// TF-IDF weights, L2-normalized. Terms outside the vocabulary are
    /// ignored; a text with no known terms maps to the empty vector.
    pub fn featurize(&self, text: &str) -> SparseVec {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for token in tokenize(text) {
            if let Some(&i) = self.index.get(&token) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut features: SparseVec =
            counts.into_iter().map(|(i, tf)| (i, tf * self.idf[i])).collect();
        let norm = features.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Vec::new();
        }
        for (_, v) in &mut features {
            *v /= norm;
        }
        features
    }
}

/// The 14 binary heads: one weight vector and bias per tactic, in
/// [`Tactic::ALL`] order. Also the shape of a gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHeads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl LinearHeads {
    pub fn zeros(n_heads: usize, n_features: usize) -> LinearHeads {
        LinearHeads { weights: vec![vec![0.0; n_features]; n_heads], biases: vec![0.0; n_heads] }
    }

    pub fn logit(&self, head: usize, features: &SparseVec) -> f64 {
        let mut z = self.biases[head];
        for (i, v) in features {
            z += self.weights[head][*i] * v;
        }
        z
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// Numerically stable BCE on the logit: max(z,0) - z*y + ln(1 + e^{-|z|}).
fn bce(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy over a batch and all heads.
pub fn batch_loss(heads: &LinearHeads, batch: &[SparseVec], labels: &[[bool; 14]]) -> f64 {
    let mut total = 0.0;
    for (features, label) in batch.iter().zip(labels) {
        for (h, &y) in label.iter().enumerate() {
            total += bce(heads.logit(h, features), f64::from(u8::from(y)));
        }
    }
    total / (batch.len() as f64 * heads.biases.len() as f64)
}

/// Analytic gradient of [`batch_loss`] with respect to every weight and
/// bias, in the same shape as the heads.
pub fn batch_gradients(heads: &LinearHeads, batch: &[SparseVec], labels: &[[bool; 14]]) -> LinearHeads {
    let n_heads = heads.biases.len();
    let n_features = heads.weights.first().map(Vec::len).unwrap_or(0);
    let scale = 1.0 / (batch.len() as f64 * n_heads as f64);
    let mut grads = LinearHeads::zeros(n_heads, n_features);
    for (features, label) in batch.iter().zip(labels) {
        for h in 0..n_heads {
            let y = f64::from(u8::from(label[h]));
            let err = (sigmoid(heads.logit(h, features)) - y) * scale;
            grads.biases[h] += err;
            for (i, v) in features {
                grads.weights[h][*i] += err * v;
            }
        }
    }
    grads
}

/// A trained multi-label model: vocabulary, heads, and the config it was
/// trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelModel {
    pub vocabulary: Vocabulary,
    pub heads: LinearHeads,
    pub config: TrainConfig,
}

fn label_row(labels: &BTreeSet<Tactic>) -> [bool; 14] {
    let mut row = [false; 14];
    for t in labels {
        row[t.index()] = true;
    }
    row
}

/// Train the 14 heads by seeded mini-batch gradient descent. Deterministic
/// given corpus, config, and seed.
pub fn train(
    descriptions: &[LabeledDescription],
    config: &TrainConfig,
) -> Result<MultiLabelModel, BaselineError> {
    for d in descriptions {
        if d.tactic_labels.is_empty() {
            return Err(BaselineError::UnlabeledDescription { attack_id: d.attack_id.clone() });
        }
    }
    let texts: Vec<&str> = descriptions.iter().map(|d| d.description_text.as_str()).collect();
    let vocabulary = fit_vocabulary(&texts)?;
    let features: Vec<SparseVec> = texts.iter().map(|t| vocabulary.featurize(t)).collect();
    let labels: Vec<[bool; 14]> = descriptions.iter().map(|d| label_row(&d.tactic_labels)).collect();

    let mut heads = LinearHeads::zeros(14, vocabulary.len());
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..descriptions.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (batch_idx, ids) in order.chunks(config.batch_size.max(1)).enumerate() {
            let batch: Vec<SparseVec> = ids.iter().map(|&i| features[i].clone()).collect();
            let batch_labels: Vec<[bool; 14]> = ids.iter().map(|&i| labels[i]).collect();
            let loss = batch_loss(&heads, &batch, &batch_labels);
            if !loss.is_finite() {
                return Err(BaselineError::NonFiniteLoss { epoch, batch: batch_idx, value: loss });
            }
            let grads = batch_gradients(&heads, &batch, &batch_labels);
            for h in 0..14 {
                heads.biases[h] -= config.learning_rate * grads.biases[h];
                for (w, g) in heads.weights[h].iter_mut().zip(&grads.weights[h]) {
                    *w -= config.learning_rate * g;
                }
            }
        }
    }
    Ok(MultiLabelModel { vocabulary, heads, config: config.clone() })
}

/// Tactics whose head's sigmoid output exceeds 0.5, i.e. whose logit is
/// strictly positive. May be empty.
pub fn predict(model: &MultiLabelModel, text: &str) -> BTreeSet<Tactic> {
    let features = model.vocabulary.featurize(text);
    Tactic::ALL
        .into_iter()
        .filter(|t| model.heads.logit(t.index(), &features) > 0.0)
        .collect()
}

/// Fraction of descriptions whose predicted set equals the gold label set.
pub fn subset_accuracy(model: &MultiLabelModel, descriptions: &[LabeledDescription]) -> f64 {
    if descriptions.is_empty() {
        return 0.0;
    }
    let exact = descriptions
        .iter()
        .filter(|d| predict(model, &d.description_text) == d.tactic_labels)
        .count();
    exact as f64 / descriptions.len() as f64
}

impl MultiLabelModel {
    /// Versioned binary layout: magic | version | config JSON | document
    /// count | per-term (name, idf) | head shape | per-head bias and
    /// weights, all little-endian, with a trailing FNV-1a 64 checksum.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        let config = serde_json::to_vec(&self.config).expect("config serializes");
        buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
        buf.extend_from_slice(&config);
        buf.extend_from_slice(&self.vocabulary.n_docs.to_le_bytes());
        buf.extend_from_slice(&(self.vocabulary.terms.len() as u64).to_le_bytes());
        for (term, idf) in self.vocabulary.terms.iter().zip(&self.vocabulary.idf) {
            buf.extend_from_slice(&(term.len() as u32).to_le_bytes());
            buf.extend_from_slice(term.as_bytes());
            buf.extend_from_slice(&idf.to_le_bytes());
        }
        buf.extend_from_slice(&(self.heads.biases.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.vocabulary.terms.len() as u64).to_le_bytes());
        for h in 0..self.heads.biases.len() {
            buf.extend_from_slice(&self.heads.biases[h].to_le_bytes());
            for w in &self.heads.weights[h] {
                buf.extend_from_slice(&w.to_le_bytes());
            }
        }
        let checksum = fnv1a64(&buf);
        buf.extend_from_slice(&checksum.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<MultiLabelModel, BaselineError> {
        let corrupt = |reason: &str| BaselineError::CorruptModel {
            path: path.to_string(),
            reason: reason.to_string(),
        };
        if bytes.len() < 4 + 4 + 4 + 8 {
            return Err(corrupt("truncated header"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if fnv1a64(body) != stored {
            return Err(BaselineError::ChecksumMismatch { path: path.to_string() });
        }
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], BaselineError> {
            if pos + n > body.len() {
                return Err(BaselineError::CorruptModel {
                    path: path.to_string(),
                    reason: "truncated body".to_string(),
                });
            }
            let slice = &body[pos..pos + n];
            pos += n;
            Ok(slice)
        };
        if take(4)? != MODEL_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let config_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let config: TrainConfig =
            serde_json::from_slice(take(config_len)?).map_err(|e| corrupt(&e.to_string()))?;
        let n_docs = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let n_terms = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let mut terms = Vec::with_capacity(n_terms);
        let mut idf = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let term = std::str::from_utf8(take(len)?)
                .map_err(|_| corrupt("term is not utf-8"))?
                .to_string();
            terms.push(term);
            idf.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        let n_heads = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let n_features = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        if n_features != n_terms {
            return Err(corrupt("feature count does not match vocabulary"));
        }
        let mut heads = LinearHeads::zeros(n_heads, n_features);
        for h in 0..n_heads {
            heads.biases[h] = f64::from_le_bytes(take(8)?.try_into().unwrap());
            for i in 0..n_features {
                heads.weights[h][i] = f64::from_le_bytes(take(8)?.try_into().unwrap());
            }
        }
        if pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(MultiLabelModel {
            vocabulary: Vocabulary { terms, index, idf, n_docs },
            heads,
            config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), BaselineError> {
        crate::jsonl::atomic_write(path, &self.to_bytes()).map_err(|e| BaselineError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })
    }

    pub fn load(path: &Path) -> Result<MultiLabelModel, BaselineError> {
        let bytes = std::fs::read(path).map_err(|e| BaselineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        MultiLabelModel::from_bytes(&bytes, &path.display().to_string())
    }
}
