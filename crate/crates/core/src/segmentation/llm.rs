//! Clause splitting through an external text-completion service.
//!
//! The service receives a fixed prompt and answers with a numbered list.
//! Answers are accepted only when the listed segments reproduce the input
//! sentence (modulo whitespace); otherwise the sentence falls back to
//! punctuation splitting and the fallback is reported.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{cut, normalize_ws, split_punctuation, SegmentError, SegmenterConfig};
use crate::model::{Granularity, Segment};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
}

impl ServiceError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ServiceError::Transport(_) => true,
            ServiceError::Status { status, .. } => *status >= 500 || *status == 429,
        }
    }
}

/// A prompt-in, text-out completion endpoint.
pub trait SegmentationService: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, ServiceError>;
}

/// POSTs the prompt as a `text/plain` body; the response body is the completion.
pub struct HttpSegmentationService {
    endpoint: String,
    model: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpSegmentationService {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, token: Option<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build();
        HttpSegmentationService {
            endpoint: endpoint.into(),
            model: model.into(),
            token,
            agent: config.into(),
        }
    }
}

impl SegmentationService for HttpSegmentationService {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &str) -> Result<String, ServiceError> {
        let mut req = self
            .agent
            .post(&self.endpoint)
            .header("X-Model", &self.model)
            .content_type("text/plain; charset=utf-8");
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send(prompt).map_err(|e| ServiceError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let mut body = String::new();
        resp.body_mut()
            .as_reader()
            .read_to_string(&mut body)
            .map_err(|e| ServiceError::Transport(e.to_string()))?;
        if status >= 300 {
            return Err(ServiceError::Status { status, body });
        }
        Ok(body)
    }
}

/// A recorded prompt/response exchange, one file per request hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transcript {
    pub model: String,
    pub prompt: String,
    pub response: String,
}

pub fn transcript_key(model: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update(b"\n");
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

const PROMPT_HEADER: &str = "Split the sentence below into clause-level segments for translation alignment.\n\
Keep every character of the sentence in its original order; do not add, drop, or change any word or punctuation mark.\n\
Answer only with a numbered list, one segment per line, formatted as \"1. segment\".\n";

/// Builds the fixed prompt. Exemplars are `(sentence, approved segments)` pairs.
pub fn build_prompt(sentence: &str, exemplars: &[(String, Vec<String>)]) -> String {
    let mut p = String::from(PROMPT_HEADER);
    for (text, segs) in exemplars {
        p.push_str("\nSentence: ");
        p.push_str(text);
        p.push_str("\nSegments:\n");
        for (k, s) in segs.iter().enumerate() {
            p.push_str(&format!("{}. {}\n", k + 1, s));
        }
    }
    p.push_str("\nSentence: ");
    p.push_str(sentence);
    p.push_str("\nSegments:\n");
    p
}

/// Extracts the items of a numbered list (`1. x` or `1) x`), in order.
pub fn parse_numbered_list(response: &str) -> Vec<String> {
    response
        .lines()
        .filter_map(|line| {
            let line = line.trim();
            let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
            if digits == 0 {
                return None;
            }
            let rest = &line[digits..];
            let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
            let item = rest.trim();
            (!item.is_empty()).then(|| item.to_string())
        })
        .collect()
}

/// Maps proposed segments back onto the exact characters of `sentence`.
/// `None` when they do not reproduce it modulo whitespace.
pub fn reconcile(sentence: &Segment, proposed: &[String]) -> Option<Vec<Segment>> {
    if proposed.is_empty() || normalize_ws(&proposed.join(" ")) != normalize_ws(&sentence.text) {
        return None;
    }
    let chars: Vec<char> = sentence.text.chars().collect();
    let mut cuts = Vec::new();
    let mut pos = 0;
    for seg in &proposed[..proposed.len() - 1] {
        let mut need = seg.chars().filter(|c| !c.is_whitespace()).count();
        while need > 0 {
            if !chars[pos].is_whitespace() {
                need -= 1;
            }
            pos += 1;
        }
        cuts.push(pos);
    }
    let mut out = cut(&chars, &cuts, &sentence.doc_id, Granularity::Phrase);
    if out.len() != proposed.len() {
        return None;
    }
    out[0].ws_before = format!("{}{}", sentence.ws_before, out[0].ws_before);
    out.last_mut().unwrap().ws_after.push_str(&sentence.ws_after);
    Some(out)
}

/// Result of segmenting one sentence. `fallback` carries the reason when the
/// service answer was rejected and punctuation splitting was used instead.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmOutcome {
    pub segments: Vec<Segment>,
    pub fallback: Option<String>,
    pub cache_hit: bool,
}

pub struct LlmSegmenter {
    service: Arc<dyn SegmentationService>,
    cache_dir: Option<PathBuf>,
    attempts: usize,
    backoff: Duration,
    write_lock: Mutex<()>,
}

impl LlmSegmenter {
    pub fn new(service: Arc<dyn SegmentationService>) -> Self {
        LlmSegmenter { service, cache_dir: None, attempts: 3, backoff: Duration::from_millis(500), write_lock: Mutex::new(()) }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn with_retries(mut self, attempts: usize, backoff: Duration) -> Self {
        self.attempts = attempts.max(1);
        self.backoff = backoff;
        self
    }

    fn cache_path(&self, key: &str) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    fn cached(&self, path: &Path) -> Option<Transcript> {
        let bytes = fs::read(path).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    fn store(&self, path: &Path, t: &Transcript) -> Result<(), SegmentError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(t).expect("transcript serializes"))?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    fn call(&self, prompt: &str) -> Result<String, SegmentError> {
        let mut last = None;
        for attempt in 0..self.attempts {
            match self.service.complete(prompt) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retryable() => {
                    log::warn!("segmentation service attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                    if attempt + 1 < self.attempts {
                        std::thread::sleep(self.backoff * (attempt as u32 + 1));
                    }
                }
                Err(e) => return Err(SegmentError::ServiceRejected(e.to_string())),
            }
        }
        Err(SegmentError::ServiceUnavailable {
            attempts: self.attempts,
            last: last.map(|e| e.to_string()).unwrap_or_default(),
        })
    }

    /// Segments one sentence, consulting the transcript cache first.
    pub fn segment(
        &self,
        sentence: &Segment,
        exemplars: &[(String, Vec<String>)],
        cfg: &SegmenterConfig,
    ) -> Result<LlmOutcome, SegmentError> {
        let prompt = build_prompt(&sentence.text, exemplars);
        let key = transcript_key(self.service.model_id(), &prompt);
        let path = self.cache_path(&key);
        let (response, cache_hit) = match path.as_deref().and_then(|p| self.cached(p)) {
            Some(t) => (t.response, true),
            None => {
                let response = self.call(&prompt)?;
                if let Some(p) = &path {
                    let t = Transcript {
                        model: self.service.model_id().to_string(),
                        prompt: prompt.clone(),
                        response: response.clone(),
                    };
                    self.store(p, &t)?;
                }
                (response, false)
            }
        };
        let proposed = parse_numbered_list(&response);
        match reconcile(sentence, &proposed) {
            Some(segments) => Ok(LlmOutcome { segments, fallback: None, cache_hit }),
            None => {
                let reason = if proposed.is_empty() {
                    "response contained no numbered segments".to_string()
                } else {
                    "segments do not reproduce the sentence".to_string()
                };
                let segments = split_punctuation(std::slice::from_ref(sentence), cfg);
                Ok(LlmOutcome { segments, fallback: Some(reason), cache_hit })
            }
        }
    }
}
