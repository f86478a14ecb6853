//! Unit-norm multilingual segment embeddings behind a provider interface.

pub mod mdev;
mod mock;
mod remote;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::scalar::{norm, Scalar};

pub use mock::{mock_embed, stable_hash, trigram_counts, MockProvider, MOCK_DIM};
pub use remote::{FileProvider, HttpProvider};

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding provider unavailable (retryable): {0}")]
    Remote(String),
    #[error("embedding configuration error: {0}")]
    Config(String),
    #[error("malformed vector data: {0}")]
    Format(String),
    #[error("no vector for text `{0}`")]
    UnknownText(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EmbedError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbedError::Remote(_))
    }
}

/// Source of sentence vectors. Implementations must be deterministic: the
/// same texts always produce the same vectors.
pub trait EmbeddingProvider<F: Scalar>: Send + Sync {
    fn provider_id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<F>>, EmbedError>;
}

impl<F: Scalar, P: EmbeddingProvider<F> + ?Sized> EmbeddingProvider<F> for Arc<P> {
    fn provider_id(&self) -> &str {
        (**self).provider_id()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<F>>, EmbedError> {
        (**self).embed_texts(texts)
    }
}

/// `n x d` row-major matrix of unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<F> {
    n: usize,
    d: usize,
    data: Vec<F>,
    provider_id: String,
}

impl<F: Scalar> EmbeddingMatrix<F> {
    /// Builds a matrix from rows, renormalising any row whose norm is off
    /// by more than the tolerance.
    pub fn from_rows(rows: Vec<Vec<F>>, d: usize, provider_id: &str) -> Result<Self, EmbedError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * d);
        for (i, mut row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(EmbedError::Config(format!(
                    "row {i} has dimension {}, provider {provider_id} declares {d}",
                    row.len()
                )));
            }
            let nr = norm(&row);
            if nr == F::zero() || !nr.is_finite() {
                return Err(EmbedError::Format(format!("row {i} has no direction")));
            }
            if (nr.widen() - 1.0).abs() > NORM_TOLERANCE {
                row.iter_mut().for_each(|x| *x = *x / nr);
            }
            data.extend(row);
        }
        Ok(EmbeddingMatrix { n, d, data, provider_id: provider_id.to_string() })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[F]> {
        self.data.chunks_exact(self.d.max(1))
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }
}

/// Embeds `texts` into a matrix whose rows follow input order.
pub fn embed<F: Scalar, P: EmbeddingProvider<F> + ?Sized>(
    provider: &P,
    texts: &[&str],
) -> Result<EmbeddingMatrix<F>, EmbedError> {
    if let Some(i) = texts.iter().position(|t| t.is_empty()) {
        return Err(EmbedError::Config(format!("text {i} is empty")));
    }
    let rows = provider.embed_texts(texts)?;
    if rows.len() != texts.len() {
        return Err(EmbedError::Format(format!(
            "provider returned {} rows for {} texts",
            rows.len(),
            texts.len()
        )));
    }
    EmbeddingMatrix::from_rows(rows, provider.dimension(), provider.provider_id())
}

/// Embeds contiguous segment blocks by their space-joined text and keeps
/// every vector in a shared cache keyed by that text.
pub struct BlockEmbedder<F: Scalar> {
    provider: Arc<dyn EmbeddingProvider<F>>,
    cache: RwLock<HashMap<String, Arc<[F]>>>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    provider: String,
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl<F: Scalar> BlockEmbedder<F> {
    pub fn new(provider: Arc<dyn EmbeddingProvider<F>>) -> Self {
        BlockEmbedder { provider, cache: RwLock::new(HashMap::new()) }
    }

    pub fn provider_id(&self) -> &str {
        self.provider.provider_id()
    }

    pub fn dimension(&self) -> usize {
        self.provider.dimension()
    }

    pub fn join(texts: &[&str]) -> String {
        texts.join(" ")
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn contains(&self, joined: &str) -> bool {
        self.cache.read().unwrap_or_else(|e| e.into_inner()).contains_key(joined)
    }

    /// Vector of the block formed by joining `texts` with single spaces.
    pub fn embed_block(&self, texts: &[&str]) -> Result<Arc<[F]>, EmbedError> {
        let joined = Self::join(texts);
        if let Some(v) = self.cache.read().unwrap_or_else(|e| e.into_inner()).get(&joined) {
            return Ok(v.clone());
        }
        let m = embed(self.provider.as_ref(), &[joined.as_str()])?;
        let v: Arc<[F]> = m.row(0).into();
        self.cache.write().unwrap_or_else(|e| e.into_inner()).insert(joined, v.clone());
        Ok(v)
    }

    /// Embeds every uncached string in `joined`, `batch` at a time. On error,
    /// everything embedded so far stays cached.
    pub fn prefetch(&self, joined: &[String], batch: usize) -> Result<(), EmbedError> {
        let mut missing: Vec<&str> = {
            let cache = self.cache.read().unwrap_or_else(|e| e.into_inner());
            joined.iter().map(String::as_str).filter(|s| !cache.contains_key(*s)).collect()
        };
        missing.sort_unstable();
        missing.dedup();
        for chunk in missing.chunks(batch.max(1)) {
            let m = embed(self.provider.as_ref(), chunk)?;
            let mut cache = self.cache.write().unwrap_or_else(|e| e.into_inner());
            for (i, text) in chunk.iter().enumerate() {
                cache.insert(text.to_string(), m.row(i).into());
            }
        }
        Ok(())
    }

    /// Writes the cache as JSON with exact `f64` values, sorted by text.
    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let cache = self.cache.read().unwrap_or_else(|e| e.into_inner());
        let file = CacheFile {
            provider: self.provider_id().to_string(),
            dim: self.dimension(),
            entries: cache.iter().map(|(k, v)| (k.clone(), v.iter().map(|x| x.widen()).collect())).collect(),
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(&file).map_err(|e| EmbedError::Format(e.to_string()))?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    /// Merges a saved cache. Refuses files written by another provider.
    pub fn load(&self, path: &Path) -> Result<usize, EmbedError> {
        let bytes = std::fs::read(path)?;
        let file: CacheFile = serde_json::from_slice(&bytes).map_err(|e| EmbedError::Format(e.to_string()))?;
        if file.provider != self.provider_id() || file.dim != self.dimension() {
            return Err(EmbedError::Config(format!(
                "cache written by {} (d={}), current provider is {} (d={})",
                file.provider,
                file.dim,
                self.provider_id(),
                self.dimension()
            )));
        }
        let mut cache = self.cache.write().unwrap_or_else(|e| e.into_inner());
        let count = file.entries.len();
        for (k, v) in file.entries {
            cache.insert(k, v.into_iter().map(F::lit).collect());
        }
        Ok(count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cosine;

    #[test]
    fn same_text_twice_gives_identical_rows() {
        let m: EmbeddingMatrix<f64> = embed(&MockProvider, &["abc", "abc"]).unwrap();
        assert_eq!(m.row(0), m.row(1));
    }

    #[test]
    fn rows_are_unit_norm() {
        let m: EmbeddingMatrix<f32> =
            embed(&MockProvider, &["Quel ramo del lago di Como", "x", "那条湖汊"]).unwrap();
        for r in m.iter_rows() {
            assert!((norm(r) as f64 - 1.0).abs() < 1e-6);
        }
        assert_eq!(m.dim(), MOCK_DIM);
    }

    #[test]
    fn empty_text_is_rejected() {
        let r: Result<EmbeddingMatrix<f64>, _> = embed(&MockProvider, &["ok", ""]);
        assert!(matches!(r, Err(EmbedError::Config(_))));
    }

    #[test]
    fn self_cosine_is_one() {
        let v: Vec<f64> = mock_embed("Quel ramo del lago di Como, che volge a mezzogiorno");
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_trigram_strings_are_nearly_orthogonal() {
        let a: Vec<f64> = mock_embed(&"a".repeat(40));
        let z: Vec<f64> = mock_embed(&"z".repeat(40));
        let c = cosine(&a, &z);
        // each string has a single distinct trigram, so the vectors are two
        // basis axes; the frozen value records that they differ
        assert!((c - 0.0).abs() < 1e-9, "cosine {c}");
        assert!(c.abs() < 0.2);
    }

    #[test]
    fn block_of_one_equals_row_embedding() {
        let e = BlockEmbedder::<f64>::new(Arc::new(MockProvider));
        let v = e.embed_block(&["Era bello."]).unwrap();
        let m: EmbeddingMatrix<f64> = embed(&MockProvider, &["Era bello."]).unwrap();
        assert_eq!(&*v, m.row(0));
    }

    #[test]
    fn repeated_block_served_from_cache() {
        let e = BlockEmbedder::<f64>::new(Arc::new(MockProvider));
        let a = e.embed_block(&["uno", "due"]).unwrap();
        assert_eq!(e.cached_len(), 1);
        let b = e.embed_block(&["uno", "due"]).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert!(e.contains("uno due"));
    }

    #[test]
    fn saved_cache_reloads_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        let e = BlockEmbedder::<f64>::new(Arc::new(MockProvider));
        e.prefetch(&["alpha beta".into(), "gamma".into()], 1).unwrap();
        e.save(&path).unwrap();
        let f = BlockEmbedder::<f64>::new(Arc::new(MockProvider));
        assert_eq!(f.load(&path).unwrap(), 2);
        assert_eq!(e.embed_block(&["gamma"]).unwrap(), f.embed_block(&["gamma"]).unwrap());
        assert_eq!(f.cached_len(), 2);
    }
}
