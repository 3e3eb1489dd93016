use std::sync::atomic::{AtomicU64, Ordering};

use super::{EmbedError, EmbeddingProvider, EmbeddingVector, TextItem};

pub const DEFAULT_OFFLINE_DIM: usize = 256;

/// Weight of the area anchor added to a skill's token vector.
const AREA_ANCHOR_WEIGHT: f64 = 0.5;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Deterministic signed feature-hashing embedder.
///
/// Each lowercased whitespace token lands in bucket `fnv1a64(token) mod D`
/// with sign `-1` when bit 63 of the hash is set. An optional area tag adds
/// half of the area's own (unit) hash vector so that skills sharing an area
/// point in a common direction.
#[derive(Debug)]
pub struct OfflineEmbedder {
    dim: usize,
    texts: AtomicU64,
}

impl OfflineEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            texts: AtomicU64::new(0),
        }
    }

    fn hashed_tokens(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut v = vec![0.0; self.dim];
        let mut any = false;
        for token in text.split_whitespace() {
            any = true;
            let h = fnv1a64(token.to_lowercase().as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[bucket] += sign;
        }
        if !any {
            return Err(EmbedError::EmptyText);
        }
        Ok(EmbeddingVector::normalized(v)?.into_inner())
    }

    pub fn embed_text(&self, text: &str, area_hint: Option<&str>) -> Result<EmbeddingVector, EmbedError> {
        let mut v = self.hashed_tokens(text)?;
        if let Some(area) = area_hint.filter(|a| !a.trim().is_empty()) {
            let anchor = self.hashed_tokens(area)?;
            v.iter_mut()
                .zip(&anchor)
                .for_each(|(x, a)| *x += AREA_ANCHOR_WEIGHT * a);
        }
        EmbeddingVector::normalized(v)
    }
}

impl Default for OfflineEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_OFFLINE_DIM)
    }
}

impl EmbeddingProvider for OfflineEmbedder {
    fn embed_batch(&self, items: &[TextItem]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let out = items
            .iter()
            .map(|i| self.embed_text(&i.text, i.area_hint.as_deref()))
            .collect::<Result<Vec<_>, _>>()?;
        self.texts.fetch_add(items.len() as u64, Ordering::Relaxed);
        Ok(out)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn cost_per_text(&self) -> f64 {
        0.0
    }

    fn texts_embedded(&self) -> u64 {
        self.texts.load(Ordering::Relaxed)
    }
}
