//! Data types shared by every stage, plus tokenization and document validation.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::alignment::AlignParams;

/// Smallest addressable unit of a source text. `char_start..char_end` are
/// offsets in Unicode scalar values into the owning document's text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub id: String,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Sentence,
    Phrase,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Sentence => "sentence",
            Granularity::Phrase => "phrase",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Granularity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sentence" => Ok(Granularity::Sentence),
            "phrase" => Ok(Granularity::Phrase),
            other => Err(format!("unknown granularity `{other}`")),
        }
    }
}

/// A contiguous span of text, the unit of embedding and alignment.
///
/// `ws_before` is only non-empty on the first segment of a chapter; together
/// with `ws_after` it makes a segment sequence lossless with respect to the
/// text it was cut from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub ws_before: String,
    #[serde(default)]
    pub ws_after: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_span: Option<[usize; 2]>,
    pub granularity: Granularity,
}

impl Segment {
    pub fn new(doc_id: &str, index: usize, text: impl Into<String>, granularity: Granularity) -> Self {
        Segment {
            doc_id: doc_id.to_string(),
            index,
            text: text.into(),
            ws_before: String::new(),
            ws_after: String::new(),
            token_span: None,
            granularity,
        }
    }
}

/// Concatenates segments with their recorded whitespace.
pub fn reassemble(segments: &[Segment]) -> String {
    let mut out = String::new();
    for s in segments {
        out.push_str(&s.ws_before);
        out.push_str(&s.text);
        out.push_str(&s.ws_after);
    }
    out
}

/// Character range `[start, end)` of each segment's text within the
/// reassembled string, offset by `base`.
pub fn segment_char_ranges(segments: &[Segment], base: usize) -> Vec<(usize, usize)> {
    let mut pos = base;
    segments
        .iter()
        .map(|s| {
            pos += s.ws_before.chars().count();
            let start = pos;
            pos += s.text.chars().count();
            let end = pos;
            pos += s.ws_after.chars().count();
            (start, end)
        })
        .collect()
}

/// Renumbers segment indices from zero and stamps the document id.
pub fn reindex(segments: &mut [Segment], doc_id: &str) {
    for (i, s) in segments.iter_mut().enumerate() {
        s.index = i;
        s.doc_id = doc_id.to_string();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chapter {
    pub key: String,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub lang: String,
    /// Full text; chapter segment sequences reassemble to consecutive slices of it.
    pub text: String,
    pub chapters: Vec<Chapter>,
    #[serde(default)]
    pub tokens: Vec<Token>,
}

impl Document {
    pub fn chapter(&self, key: &str) -> Option<&Chapter> {
        self.chapters.iter().find(|c| c.key == key)
    }

    /// Character offset at which each chapter's reassembled text starts.
    pub fn chapter_offsets(&self) -> Vec<usize> {
        let mut pos = 0;
        self.chapters
            .iter()
            .map(|c| {
                let start = pos;
                pos += reassemble(&c.segments).chars().count();
                start
            })
            .collect()
    }

    /// Fills `token_span` of every segment from character offsets.
    /// Segments that cover no token keep `None`.
    pub fn assign_token_spans(&mut self) {
        let offsets = self.chapter_offsets();
        let tokens = &self.tokens;
        for (chapter, base) in self.chapters.iter_mut().zip(offsets) {
            let ranges = segment_char_ranges(&chapter.segments, base);
            for (seg, (start, end)) in chapter.segments.iter_mut().zip(ranges) {
                seg.token_span = token_span_for_range(tokens, start, end);
            }
        }
    }
}

/// Indices of the first and last token lying inside `[start, end)`.
pub fn token_span_for_range(tokens: &[Token], start: usize, end: usize) -> Option<[usize; 2]> {
    let first = tokens.partition_point(|t| t.char_start < start);
    let last = tokens.partition_point(|t| t.char_end <= end);
    if first < last {
        Some([first, last - 1])
    } else {
        None
    }
}

/// Shape of a bead: how many segments sit on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BeadType {
    #[serde(rename = "1-1")]
    OneToOne,
    #[serde(rename = "1-N")]
    OneToMany,
    #[serde(rename = "N-1")]
    ManyToOne,
    #[serde(rename = "N-M")]
    ManyToMany,
    #[serde(rename = "1-0")]
    Omission,
    #[serde(rename = "0-1")]
    Insertion,
}

impl BeadType {
    pub const ALL: [BeadType; 6] = [
        BeadType::OneToOne,
        BeadType::OneToMany,
        BeadType::ManyToOne,
        BeadType::ManyToMany,
        BeadType::Omission,
        BeadType::Insertion,
    ];

    /// Classifies a bead by its side sizes. `None` for the empty bead.
    pub fn classify(src_len: usize, tgt_len: usize) -> Option<BeadType> {
        Some(match (src_len, tgt_len) {
            (0, 0) => return None,
            (1, 1) => BeadType::OneToOne,
            (1, 0) => BeadType::Omission,
            (0, 1) => BeadType::Insertion,
            (1, _) => BeadType::OneToMany,
            (_, 1) => BeadType::ManyToOne,
            (0, _) | (_, 0) => return None,
            _ => BeadType::ManyToMany,
        })
    }

    pub fn is_gap(self) -> bool {
        matches!(self, BeadType::Omission | BeadType::Insertion)
    }

    pub fn label(self) -> &'static str {
        match self {
            BeadType::OneToOne => "1-1",
            BeadType::OneToMany => "1-N",
            BeadType::ManyToOne => "N-1",
            BeadType::ManyToMany => "N-M",
            BeadType::Omission => "1-0",
            BeadType::Insertion => "0-1",
        }
    }
}

impl fmt::Display for BeadType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One aligned pair: a block of source segments against a block of target
/// segments. Gap beads have one empty side and no similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bead {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
    #[serde(rename = "sim", default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    #[serde(rename = "type")]
    pub kind: BeadType,
    /// Set on gold beads whose target side was swapped with a neighbour.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reordered: bool,
}

impl Bead {
    /// Builds a bead, deriving its type. `None` for an empty or malformed shape.
    pub fn new(src: Vec<usize>, tgt: Vec<usize>, similarity: Option<f64>) -> Option<Bead> {
        let kind = BeadType::classify(src.len(), tgt.len())?;
        let similarity = if kind.is_gap() { None } else { similarity };
        Some(Bead { src, tgt, similarity, kind, reordered: false })
    }

    pub fn span(src_start: usize, src_len: usize, tgt_start: usize, tgt_len: usize, similarity: Option<f64>) -> Bead {
        Bead::new(
            (src_start..src_start + src_len).collect(),
            (tgt_start..tgt_start + tgt_len).collect(),
            similarity,
        )
        .expect("bead with at least one segment")
    }

    pub fn is_gap(&self) -> bool {
        self.kind.is_gap()
    }

    /// Shape key `(|src|, |tgt|)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.src.len(), self.tgt.len())
    }
}

/// Display identifier of the bead at 0-based position `k`: `b0001`, `b0002`, ...
pub fn bead_id(k: usize) -> String {
    format!("b{:04}", k + 1)
}

/// Ordered bead sequence with the parameters and provider that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub source_doc: String,
    pub target_doc: String,
    pub params: AlignParams,
    pub provider: String,
    pub beads: Vec<Bead>,
}

impl AlignmentResult {
    pub fn non_gap_count(&self) -> usize {
        self.beads.iter().filter(|b| !b.is_gap()).count()
    }

    pub fn gap_count(&self) -> usize {
        self.beads.iter().filter(|b| b.is_gap()).count()
    }

    /// Checks that beads partition `0..n_src` and `0..n_tgt`, each index
    /// used exactly once, with contiguous sides and consistent types.
    pub fn partition_violations(&self, n_src: usize, n_tgt: usize) -> Vec<String> {
        let mut problems = Vec::new();
        let mut seen_src = vec![0usize; n_src];
        let mut seen_tgt = vec![0usize; n_tgt];
        for (k, bead) in self.beads.iter().enumerate() {
            if BeadType::classify(bead.src.len(), bead.tgt.len()) != Some(bead.kind) {
                problems.push(format!("bead {k}: type {} inconsistent with shape {:?}", bead.kind, bead.shape()));
            }
            for side in [&bead.src, &bead.tgt] {
                if side.windows(2).any(|w| w[1] != w[0] + 1) {
                    problems.push(format!("bead {k}: indices not contiguous"));
                }
            }
            for &i in &bead.src {
                match seen_src.get_mut(i) {
                    Some(c) => *c += 1,
                    None => problems.push(format!("bead {k}: source index {i} out of range")),
                }
            }
            for &j in &bead.tgt {
                match seen_tgt.get_mut(j) {
                    Some(c) => *c += 1,
                    None => problems.push(format!("bead {k}: target index {j} out of range")),
                }
            }
        }
        for (i, c) in seen_src.iter().enumerate().filter(|(_, &c)| c != 1) {
            problems.push(format!("source index {i} covered {c} times"));
        }
        for (j, c) in seen_tgt.iter().enumerate().filter(|(_, &c)| c != 1) {
            problems.push(format!("target index {j} covered {c} times"));
        }
        problems
    }

    /// True when source and target spans both strictly increase along the bead sequence.
    pub fn is_monotone(&self) -> bool {
        let mut last_src: Option<usize> = None;
        let mut last_tgt: Option<usize> = None;
        for bead in &self.beads {
            if let (Some(&first), Some(prev)) = (bead.src.first(), last_src) {
                if first <= prev {
                    return false;
                }
            }
            if let (Some(&first), Some(prev)) = (bead.tgt.first(), last_tgt) {
                if first <= prev {
                    return false;
                }
            }
            if let Some(&l) = bead.src.last() {
                last_src = Some(l);
            }
            if let Some(&l) = bead.tgt.last() {
                last_tgt = Some(l);
            }
        }
        true
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xAC00..=0xD7AF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2FFFF)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Space,
    Word,
    Single,
}

fn char_class(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if is_cjk(c) {
        CharClass::Single
    } else if c.is_alphanumeric() {
        CharClass::Word
    } else {
        CharClass::Single
    }
}

pub fn token_id(ordinal: usize) -> String {
    format!("w{ordinal:05}")
}

/// Splits text into word tokens (maximal letter/digit runs), one token per
/// punctuation mark, and one token per CJK character.
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_from(text, 0, 1)
}

/// Like [`tokenize`], with offsets shifted by `char_base` and ids numbered from `first_ordinal`.
pub fn tokenize_from(text: &str, char_base: usize, first_ordinal: usize) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let push = |tokens: &mut Vec<Token>, text: String, start: usize, end: usize| {
        let ordinal = first_ordinal + tokens.len();
        tokens.push(Token { id: token_id(ordinal), text, char_start: char_base + start, char_end: char_base + end });
    };
    let mut pos = 0;
    for c in text.chars() {
        match char_class(c) {
            CharClass::Word => {
                if current.is_empty() {
                    start = pos;
                }
                current.push(c);
            }
            class => {
                if !current.is_empty() {
                    push(&mut tokens, std::mem::take(&mut current), start, pos);
                }
                if class == CharClass::Single {
                    push(&mut tokens, c.to_string(), pos, pos + 1);
                }
            }
        }
        pos += 1;
    }
    if !current.is_empty() {
        push(&mut tokens, current, start, pos);
    }
    tokens
}

/// Number of tokens in `text`, used for pair-length statistics.
pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}

/// A broken document invariant. Violations are reported, never raised.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateTokenId(String),
    TokenOrder { id: String },
    TokenText { id: String },
    SegmentIndex { chapter: String, expected: usize, found: usize },
    TokenSpanRange { chapter: String, segment: usize },
    TokenSpanOverlap { chapter: String, previous: usize, segment: usize },
    Reassembly,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateTokenId(id) => write!(f, "duplicate token id {id}"),
            Violation::TokenOrder { id } => write!(f, "token {id} overlaps or precedes its predecessor"),
            Violation::TokenText { id } => write!(f, "token {id} text differs from document text at its offsets"),
            Violation::SegmentIndex { chapter, expected, found } => {
                write!(f, "chapter {chapter}: segment index {found}, expected {expected}")
            }
            Violation::TokenSpanRange { chapter, segment } => {
                write!(f, "chapter {chapter}: segment {segment} token span out of range")
            }
            Violation::TokenSpanOverlap { chapter, previous, segment } => {
                write!(f, "chapter {chapter}: segment {segment} token span overlaps segment {previous}")
            }
            Violation::Reassembly => write!(f, "segments do not reassemble to the document text"),
        }
    }
}

/// Lists every violated document invariant, in a fixed order. Empty means valid.
pub fn validate_document(doc: &Document) -> Vec<Violation> {
    let mut out = Vec::new();
    let chars: Vec<char> = doc.text.chars().collect();

    let mut ids = HashSet::new();
    for t in &doc.tokens {
        if !ids.insert(t.id.as_str()) {
            out.push(Violation::DuplicateTokenId(t.id.clone()));
        }
    }
    let mut prev_end: Option<usize> = None;
    for t in &doc.tokens {
        if t.char_start >= t.char_end || prev_end.is_some_and(|e| t.char_start < e) {
            out.push(Violation::TokenOrder { id: t.id.clone() });
        }
        prev_end = Some(t.char_end);
        let matches = t.char_end <= chars.len()
            && t.char_start <= t.char_end
            && chars[t.char_start..t.char_end].iter().copied().eq(t.text.chars());
        if !matches {
            out.push(Violation::TokenText { id: t.id.clone() });
        }
    }

    let mut joined = String::new();
    for chapter in &doc.chapters {
        joined.push_str(&reassemble(&chapter.segments));
        let mut prev: Option<(usize, [usize; 2])> = None;
        for (expected, seg) in chapter.segments.iter().enumerate() {
            if seg.index != expected {
                out.push(Violation::SegmentIndex { chapter: chapter.key.clone(), expected, found: seg.index });
            }
            if let Some(span) = seg.token_span {
                if span[0] > span[1] || span[1] >= doc.tokens.len() {
                    out.push(Violation::TokenSpanRange { chapter: chapter.key.clone(), segment: seg.index });
                }
                if let Some((p, prev_span)) = prev {
                    if span[0] <= prev_span[1] {
                        out.push(Violation::TokenSpanOverlap {
                            chapter: chapter.key.clone(),
                            previous: p,
                            segment: seg.index,
                        });
                    }
                }
                prev = Some((seg.index, span));
            }
        }
    }
    if !doc.chapters.is_empty() && joined != doc.text {
        out.push(Violation::Reassembly);
    }
    out
}
