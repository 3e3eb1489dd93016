//! Cosine similarity and top-k search over stored embeddings.
//!
//! The brute-force backend is exact and is the reference; the approximate
//! backend is a hierarchical navigable small-world graph.

mod hnsw;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::embedding::{dot, l2_norm, EmbeddingVector};

pub use hnsw::{Hnsw, HnswParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("id `{0}` already present")]
    DuplicateId(String),
    #[error("id `{0}` not present")]
    UnknownId(String),
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, IndexError> {
    cosine_slices(a.as_slice(), b.as_slice())
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64, IndexError> {
    if a.len() != b.len() {
        return Err(IndexError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(IndexError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Descending similarity, then ascending id.
pub fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    BruteForce,
    Approximate(HnswParams),
}

#[derive(Debug, Clone)]
pub struct VectorIndex {
    entries: BTreeMap<String, EmbeddingVector>,
    dim: Option<usize>,
    graph: Option<Hnsw>,
    backend: Backend,
}

impl Default for VectorIndex {
    fn default() -> Self {
        Self::brute_force()
    }
}

impl VectorIndex {
    pub fn brute_force() -> Self {
        Self::with_backend(Backend::BruteForce)
    }

    pub fn approximate(params: HnswParams) -> Self {
        Self::with_backend(Backend::Approximate(params))
    }

    pub fn with_backend(backend: Backend) -> Self {
        let graph = match &backend {
            Backend::BruteForce => None,
            Backend::Approximate(p) => Some(Hnsw::new(p.clone())),
        };
        Self {
            entries: BTreeMap::new(),
            dim: None,
            graph,
            backend,
        }
    }

    /// Builds an index from `(id, vector)` pairs in the given order.
    pub fn build<I>(backend: Backend, items: I) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = (String, EmbeddingVector)>,
    {
        let mut idx = Self::with_backend(backend);
        for (id, v) in items {
            idx.insert(id, v)?;
        }
        Ok(idx)
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.entries.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: EmbeddingVector) -> Result<(), IndexError> {
        let id = id.into();
        if self.entries.contains_key(&id) {
            return Err(IndexError::DuplicateId(id));
        }
        if let Some(d) = self.dim {
            if vector.dim() != d {
                return Err(IndexError::DimensionMismatch {
                    expected: d,
                    actual: vector.dim(),
                });
            }
        }
        if vector.norm() == 0.0 {
            return Err(IndexError::ZeroVector);
        }
        self.dim = Some(vector.dim());
        if let Some(g) = self.graph.as_mut() {
            g.insert(&id, vector.as_slice());
        }
        self.entries.insert(id, vector);
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> Result<EmbeddingVector, IndexError> {
        let v = self
            .entries
            .remove(id)
            .ok_or_else(|| IndexError::UnknownId(id.to_string()))?;
        if let Backend::Approximate(p) = &self.backend {
            // Graph deletion is not supported; rebuild from what remains.
            let mut g = Hnsw::new(p.clone());
            for (k, e) in &self.entries {
                g.insert(k, e.as_slice());
            }
            self.graph = Some(g);
        }
        if self.entries.is_empty() {
            self.dim = None;
        }
        Ok(v)
    }

    /// The `min(k, len)` most similar entries, similarity non-increasing,
    /// ties by ascending id.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<(String, f64)>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let dim = self.dim.ok_or(IndexError::EmptyIndex)?;
        if query.dim() != dim {
            return Err(IndexError::DimensionMismatch {
                expected: dim,
                actual: query.dim(),
            });
        }
        if query.norm() == 0.0 {
            return Err(IndexError::ZeroVector);
        }
        let mut hits: Vec<(String, f64)> = match &self.graph {
            None => self
                .entries
                .iter()
                .map(|(id, v)| Ok((id.clone(), cosine_similarity(query, v)?)))
                .collect::<Result<_, IndexError>>()?,
            Some(g) => g
                .search(query.as_slice(), k)
                .into_iter()
                .map(|id| {
                    let v = &self.entries[&id];
                    Ok((id, cosine_similarity(query, v)?))
                })
                .collect::<Result<_, IndexError>>()?,
        };
        hits.sort_by(rank_order);
        hits.truncate(k);
        Ok(hits)
    }
}
