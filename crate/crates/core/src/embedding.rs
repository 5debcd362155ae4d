//! Sentence vectors and the providers that produce them.
//!
//! Two providers share the [`EmbeddingProvider`] contract: an
//! [`EmbeddingStore`] of precomputed vectors keyed by example id (loaded from
//! TSV written by an external encoder), and a [`HashingEmbedder`] that derives
//! a vector from the text alone with signed feature hashing.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use twox_hash::XxHash64;

use crate::num::Scalar;
use crate::text::tokenize;

/// Output size of the Universal Sentence Encoder.
pub const DEFAULT_DIM: usize = 512;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("no embedding for id `{0}`")]
    MissingId(String),
    #[error("embedding contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("line {line}: row `{id}` has {found} values, expected {expected}")]
    Arity { line: usize, id: String, expected: usize, found: usize },
    #[error("line {line}: cell `{cell}` is not a decimal number")]
    NonNumeric { line: usize, cell: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("hashing embedder needs dim >= 8, got {0}")]
    HashDimTooSmall(usize),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for EmbeddingError {
    fn from(e: std::io::Error) -> Self {
        EmbeddingError::Io(e.to_string())
    }
}

/// A fixed-length vector of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T>(Vec<T>);

impl<T: Scalar> Embedding<T> {
    pub fn new(values: Vec<T>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::ZeroDim);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(i));
        }
        Ok(Embedding(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Embedding(vec![T::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn l2_norm(&self) -> T {
        self.0.iter().map(|&v| v * v).sum::<T>().sqrt()
    }
}

impl<T> Deref for Embedding<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> AsRef<[T]> for Embedding<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

/// Euclidean distance `sqrt(sum((a_i - b_i)^2))`.
pub fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> Result<T, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimMismatch { expected: a.len(), found: b.len() });
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt())
}

/// Anything that can turn an example (id and text) into a vector.
pub trait EmbeddingProvider<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    fn embed(&self, id: &str, text: &str) -> Result<Embedding<T>, EmbeddingError>;
}

/// Precomputed vectors keyed by id, immutable after load.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore<T> {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Embedding<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> EmbeddingStore<T> {
    pub fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        Ok(EmbeddingStore { dim, ids: Vec::new(), vectors: Vec::new(), index: HashMap::new() })
    }

    pub fn insert(&mut self, id: impl Into<String>, v: Embedding<T>) -> Result<(), EmbeddingError> {
        let id = id.into();
        if v.dim() != self.dim {
            return Err(EmbeddingError::DimMismatch { expected: self.dim, found: v.dim() });
        }
        if self.index.contains_key(&id) {
            return Err(EmbeddingError::DuplicateId { line: self.ids.len() + 1, id });
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lookup(&self, id: &str) -> Result<&Embedding<T>, EmbeddingError> {
        self.index
            .get(id)
            .map(|&i| &self.vectors[i])
            .ok_or_else(|| EmbeddingError::MissingId(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Embedding<T>)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    /// Writes `id\tv1\t...\tvD` rows using shortest round-trip decimal formatting.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, v) in self.iter() {
            out.write_all(id.as_bytes())?;
            for x in v.iter() {
                write!(out, "\t{}", x.as_f64())?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Loads a TSV store where every row is `id` followed by `dim` decimal values.
pub fn load_store<T: Scalar, R: BufRead>(reader: R, dim: usize) -> Result<EmbeddingStore<T>, EmbeddingError> {
    let mut store = EmbeddingStore::new(dim)?;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let mut cells = line.split('\t');
        let id = cells.next().unwrap_or_default().to_string();
        let values = cells
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .and_then(T::from_f64)
                    .ok_or_else(|| EmbeddingError::NonNumeric { line: line_no, cell: c.to_string() })
            })
            .collect::<Result<Vec<T>, _>>()?;
        if values.len() != dim {
            return Err(EmbeddingError::Arity { line: line_no, id, expected: dim, found: values.len() });
        }
        if store.index.contains_key(&id) {
            return Err(EmbeddingError::DuplicateId { line: line_no, id });
        }
        store.insert(id, Embedding(values))?;
    }
    Ok(store)
}

/// Like [`load_store`] but takes the dimension from the first row.
pub fn load_store_inferred<T: Scalar, R: BufRead>(mut reader: R) -> Result<EmbeddingStore<T>, EmbeddingError> {
    let mut buf = String::new();
    let mut prefix = Vec::new();
    let dim = loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            // Empty stream: nothing fixes a dimension, fall back to the default.
            return EmbeddingStore::new(DEFAULT_DIM);
        }
        prefix.push(buf.clone());
        let row = buf.trim_end_matches(['\n', '\r']);
        if !row.is_empty() {
            break row.split('\t').count().saturating_sub(1);
        }
    };
    if dim == 0 {
        return Err(EmbeddingError::ZeroDim);
    }
    let chained = std::io::Read::chain(std::io::Cursor::new(prefix.concat()), reader);
    load_store(chained, dim)
}

impl<T: Scalar> EmbeddingProvider<T> for EmbeddingStore<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, id: &str, _text: &str) -> Result<Embedding<T>, EmbeddingError> {
        self.lookup(id).cloned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingEmbedderConfig {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashingEmbedderConfig {
    fn default() -> Self {
        HashingEmbedderConfig { dim: DEFAULT_DIM, seed: 0 }
    }
}

/// Signed feature hashing over lowercased alphanumeric tokens, L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    config: HashingEmbedderConfig,
}

impl HashingEmbedder {
    pub fn new(config: HashingEmbedderConfig) -> Result<Self, EmbeddingError> {
        if config.dim < 8 {
            return Err(EmbeddingError::HashDimTooSmall(config.dim));
        }
        Ok(HashingEmbedder { config })
    }

    pub fn config(&self) -> HashingEmbedderConfig {
        self.config
    }

    pub fn hash_embed<T: Scalar>(&self, text: &str) -> Embedding<T> {
        let dim = self.config.dim;
        let mut acc = vec![0.0f64; dim];
        for tok in tokenize(text) {
            let h = XxHash64::oneshot(self.config.seed, tok.as_bytes());
            let bucket = (h % dim as u64) as usize;
            // high bit picks the sign; the bucket uses the low bits
            acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut acc {
                *v /= norm;
            }
        }
        Embedding(acc.into_iter().map(T::lit).collect())
    }
}

impl<T: Scalar> EmbeddingProvider<T> for HashingEmbedder {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed(&self, _id: &str, text: &str) -> Result<Embedding<T>, EmbeddingError> {
        Ok(self.hash_embed(text))
    }
}
