//! Sentence and phrase segmentation.
//!
//! Three strategies produce [`Segment`] sequences: rule-based sentence
//! splitting, punctuation refinement of sentences into phrases, and
//! service-backed clause splitting ([`llm`]). Every strategy is lossless:
//! [`crate::model::reassemble`] of the output reproduces the input text.

mod abbreviations;
pub mod llm;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{reindex, Granularity, Segment};

pub use llm::{HttpSegmentationService, LlmOutcome, LlmSegmenter, SegmentationService, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Sentence,
    Punctuation,
    Llm,
}

#[derive(Debug, thiserror::Error)]
pub enum SegmentError {
    #[error("invalid segmenter configuration: {0}")]
    InvalidConfig(String),
    #[error("segmentation service unavailable after {attempts} attempts: {last}")]
    ServiceUnavailable { attempts: usize, last: String },
    #[error("segmentation service rejected the request: {0}")]
    ServiceRejected(String),
    #[error("transcript cache: {0}")]
    Cache(#[from] std::io::Error),
}

const CJK_TERMINATORS: [char; 3] = ['。', '！', '？'];
const CJK_SOFT_BREAKS: [char; 4] = ['、', '，', '；', '：'];
const CLOSERS: [char; 11] = ['»', '”', '"', '’', '\'', ')', ']', '」', '』', '）', '›'];
const OPENERS: [char; 9] = ['«', '“', '"', '‘', '\'', '(', '[', '—', '–'];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub strategy: Strategy,
    pub terminators: BTreeSet<char>,
    pub soft_breaks: BTreeSet<char>,
    pub min_segment_chars: usize,
    /// Lowercase, period included (`"mr."`).
    pub abbreviations: BTreeSet<String>,
}

impl SegmenterConfig {
    /// Defaults for a BCP-47 language tag, with that language's abbreviation list.
    pub fn for_language(lang: &str) -> Self {
        SegmenterConfig {
            strategy: Strategy::Sentence,
            terminators: ['.', '!', '?', '…'].into_iter().chain(CJK_TERMINATORS).collect(),
            soft_breaks: [',', ';', ':'].into_iter().chain(CJK_SOFT_BREAKS).collect(),
            min_segment_chars: 15,
            abbreviations: abbreviations::for_language(lang).iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_min_segment_chars(mut self, n: usize) -> Self {
        self.min_segment_chars = n;
        self
    }

    pub fn validate(&self) -> Result<(), SegmentError> {
        if self.min_segment_chars < 1 {
            return Err(SegmentError::InvalidConfig("min_segment_chars must be at least 1".into()));
        }
        if let Some(c) = self.terminators.intersection(&self.soft_breaks).next() {
            return Err(SegmentError::InvalidConfig(format!(
                "`{c}` is both a terminator and a soft break"
            )));
        }
        Ok(())
    }
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig::for_language("")
    }
}

/// Cuts `text` at the given char positions into trimmed segments, moving
/// surrounding whitespace into `ws_before`/`ws_after`.
fn cut(chars: &[char], cuts: &[usize], doc_id: &str, granularity: Granularity) -> Vec<Segment> {
    let mut segments: Vec<Segment> = Vec::new();
    let mut pending_ws = String::new();
    let mut start = 0;
    for &end in cuts.iter().chain(std::iter::once(&chars.len())) {
        if end <= start {
            continue;
        }
        let piece = &chars[start..end];
        start = end;
        let lead = piece.iter().take_while(|c| c.is_whitespace()).count();
        if lead == piece.len() {
            pending_ws.extend(piece);
            continue;
        }
        let trail = piece.iter().rev().take_while(|c| c.is_whitespace()).count();
        pending_ws.extend(&piece[..lead]);
        match segments.last_mut() {
            Some(prev) => prev.ws_after.push_str(&std::mem::take(&mut pending_ws)),
            None => {}
        }
        let mut seg = Segment::new(doc_id, segments.len(), piece[lead..piece.len() - trail].iter().collect::<String>(), granularity);
        if segments.is_empty() {
            seg.ws_before = std::mem::take(&mut pending_ws);
        }
        pending_ws.extend(&piece[piece.len() - trail..]);
        segments.push(seg);
    }
    if let Some(last) = segments.last_mut() {
        last.ws_after.push_str(&pending_ws);
    }
    segments
}

fn preceding_word(chars: &[char], end: usize) -> String {
    let start = chars[..end]
        .iter()
        .rposition(|c| !(c.is_alphanumeric() || *c == '.'))
        .map_or(0, |p| p + 1);
    chars[start..end].iter().collect::<String>().to_lowercase()
}

fn starts_sentence(chars: &[char], mut k: usize) -> bool {
    while k < chars.len() && OPENERS.contains(&chars[k]) {
        k += 1;
        while k < chars.len() && chars[k] == ' ' {
            k += 1;
        }
    }
    chars.get(k).is_some_and(|c| c.is_uppercase() || c.is_numeric())
}

/// Char positions after which a sentence ends.
fn sentence_cuts(chars: &[char], cfg: &SegmenterConfig) -> Vec<usize> {
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            cuts.push(i + 1);
            i += 1;
            continue;
        }
        if !cfg.terminators.contains(&c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && cfg.terminators.contains(&chars[j]) {
            j += 1;
        }
        let cjk = chars[i..j].iter().any(|c| CJK_TERMINATORS.contains(c));
        let run_is_period = j == i + 1 && c == '.';
        while j < chars.len() && CLOSERS.contains(&chars[j]) {
            j += 1;
        }
        let boundary = if cjk {
            true
        } else if j == chars.len() {
            true
        } else if chars[j].is_whitespace() {
            let k = j + chars[j..].iter().take_while(|c| c.is_whitespace() && **c != '\n').count();
            let next_is_break = chars.get(k) == Some(&'\n');
            let protected = run_is_period && cfg.abbreviations.contains(&(preceding_word(chars, i) + "."));
            !protected && (next_is_break || starts_sentence(chars, k))
        } else {
            false
        };
        if boundary {
            cuts.push(j);
        }
        i = j.max(i + 1);
    }
    cuts
}

/// Splits text into sentences.
pub fn split_sentences(text: &str, doc_id: &str, cfg: &SegmenterConfig) -> Vec<Segment> {
    let chars: Vec<char> = text.chars().collect();
    let cuts = sentence_cuts(&chars, cfg);
    cut(&chars, &cuts, doc_id, Granularity::Sentence)
}

fn merge_into(acc: &mut Segment, next: Segment) {
    acc.text.push_str(&acc.ws_after);
    acc.text.push_str(&next.text);
    acc.ws_after = next.ws_after;
}

/// Splits one sentence after its soft breaks, then merges fragments shorter
/// than `min_segment_chars` forward (the last one backward).
fn split_one(sentence: &Segment, cfg: &SegmenterConfig) -> Vec<Segment> {
    let chars: Vec<char> = sentence.text.chars().collect();
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !cfg.soft_breaks.contains(&chars[i]) {
            i += 1;
            continue;
        }
        let cjk = CJK_SOFT_BREAKS.contains(&chars[i]);
        let mut j = i + 1;
        while j < chars.len() && CLOSERS.contains(&chars[j]) {
            j += 1;
        }
        if j < chars.len() && (cjk || chars[j].is_whitespace()) {
            cuts.push(j);
        }
        i = j;
    }
    let mut fragments = cut(&chars, &cuts, &sentence.doc_id, Granularity::Phrase);
    if let Some(first) = fragments.first_mut() {
        first.ws_before = sentence.ws_before.clone();
    }
    if let Some(last) = fragments.last_mut() {
        last.ws_after.push_str(&sentence.ws_after);
    }

    let mut out: Vec<Segment> = Vec::new();
    let mut acc: Option<Segment> = None;
    for f in fragments {
        let mut current = match acc.take() {
            None => f,
            Some(mut a) => {
                merge_into(&mut a, f);
                a
            }
        };
        if current.text.chars().count() >= cfg.min_segment_chars {
            current.token_span = None;
            out.push(current);
        } else {
            acc = Some(current);
        }
    }
    if let Some(rest) = acc {
        match out.last_mut() {
            Some(last) => merge_into(last, rest),
            None => out.push(rest),
        }
    }
    out
}

/// Refines sentences into phrases at soft-break punctuation. Sentence
/// boundaries are never crossed; punctuation stays with the left fragment.
pub fn split_punctuation(sentences: &[Segment], cfg: &SegmenterConfig) -> Vec<Segment> {
    let mut out: Vec<Segment> = sentences.iter().flat_map(|s| split_one(s, cfg)).collect();
    if let Some(doc_id) = sentences.first().map(|s| s.doc_id.clone()) {
        reindex(&mut out, &doc_id);
    }
    out
}

/// Collapses whitespace runs to one space and trims.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
