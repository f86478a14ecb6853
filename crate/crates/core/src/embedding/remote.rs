use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use std::time::Duration;

use super::{mdev, EmbedError, EmbeddingProvider};
use crate::scalar::Scalar;

/// Serves precomputed vectors from an `MDEV1` file, one row per line of a
/// companion text list.
pub struct FileProvider {
    id: String,
    d: usize,
    rows: Vec<Vec<f32>>,
    index: HashMap<String, usize>,
}

impl FileProvider {
    pub fn from_parts(id: &str, vectors: &[u8], texts: &[String]) -> Result<Self, EmbedError> {
        let (n, d, values) = mdev::decode(vectors)?;
        if n != texts.len() {
            return Err(EmbedError::Config(format!("{n} vectors for {} texts", texts.len())));
        }
        let rows: Vec<Vec<f32>> = values.chunks_exact(d.max(1)).map(<[f32]>::to_vec).collect();
        let index = texts.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(FileProvider { id: format!("file:{id}"), d, rows, index })
    }

    /// `vectors` is the MDEV1 file, `texts` a UTF-8 file with one text per line.
    pub fn open(vectors: &Path, texts: &Path) -> Result<Self, EmbedError> {
        let bytes = std::fs::read(vectors)?;
        let lines: Vec<String> = std::fs::read_to_string(texts)?.lines().map(str::to_string).collect();
        let id = vectors.file_stem().and_then(|s| s.to_str()).unwrap_or("vectors");
        Self::from_parts(id, &bytes, &lines)
    }

    pub fn rows(&self) -> &[Vec<f32>] {
        &self.rows
    }
}

impl<F: Scalar> EmbeddingProvider<F> for FileProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.d
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<F>>, EmbedError> {
        texts
            .iter()
            .map(|t| {
                let i = *self.index.get(*t).ok_or_else(|| EmbedError::UnknownText(t.to_string()))?;
                Ok(self.rows[i].iter().map(|&x| F::lit(f64::from(x))).collect())
            })
            .collect()
    }
}

/// Remote embedder: POSTs newline-delimited texts, receives an `MDEV1` body.
pub struct HttpProvider {
    id: String,
    url: String,
    d: usize,
    batch_size: usize,
    attempts: usize,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(id: &str, url: impl Into<String>, dimension: usize, batch_size: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpProvider {
            id: format!("http:{id}"),
            url: url.into(),
            d: dimension,
            batch_size: batch_size.max(1),
            attempts: 3,
            agent,
        }
    }

    pub fn with_attempts(mut self, attempts: usize) -> Self {
        self.attempts = attempts.max(1);
        self
    }

    fn post_once(&self, body: &str) -> Result<Vec<u8>, EmbedError> {
        let mut resp = self
            .agent
            .post(&self.url)
            .content_type("text/plain; charset=utf-8")
            .send(body)
            .map_err(|e| EmbedError::Remote(e.to_string()))?;
        let status = resp.status().as_u16();
        let mut bytes = Vec::new();
        resp.body_mut()
            .as_reader()
            .read_to_end(&mut bytes)
            .map_err(|e| EmbedError::Remote(e.to_string()))?;
        match status {
            200..=299 => Ok(bytes),
            500.. | 429 => Err(EmbedError::Remote(format!("HTTP {status}"))),
            _ => Err(EmbedError::Config(format!("HTTP {status}: {}", String::from_utf8_lossy(&bytes)))),
        }
    }

    fn post_batch<F: Scalar>(&self, texts: &[&str]) -> Result<Vec<Vec<F>>, EmbedError> {
        let body = texts.iter().map(|t| t.replace(['\n', '\r'], " ")).collect::<Vec<_>>().join("\n");
        let mut last = None;
        for _ in 0..self.attempts {
            match self.post_once(&body) {
                Ok(bytes) => {
                    let (n, d, values) = mdev::decode(&bytes)?;
                    if d != self.d {
                        return Err(EmbedError::Config(format!(
                            "endpoint returned dimension {d}, {} is configured with {}",
                            self.id, self.d
                        )));
                    }
                    if n != texts.len() {
                        return Err(EmbedError::Format(format!("{n} rows for {} texts", texts.len())));
                    }
                    return Ok(values.chunks_exact(d).map(|r| r.iter().map(|&x| F::lit(f64::from(x))).collect()).collect());
                }
                Err(e) if e.is_retryable() => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| EmbedError::Remote("no attempt made".into())))
    }
}

impl<F: Scalar> EmbeddingProvider<F> for HttpProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.d
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<F>>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            out.extend(self.post_batch::<F>(chunk)?);
        }
        Ok(out)
    }
}
