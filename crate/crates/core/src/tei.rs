//! Token-anchored TEI.
//!
//! Source files mark every token as `<w xml:id="...">` inside `<s>` inside
//! `<div type="chapter" n="...">`. Translation files hold one `<seg>` per
//! bead whose `from`/`to` attributes point at the first and last source
//! token of the bead's source side:
//!
//! ```xml
//! <seg from="#w00002" to="#w00004" type="1-1" sim="0.912">
//!   <s n="1">Quel ramo del lago di Como</s>
//! </seg>
//! <seg from="#w00005" to="#w00011" type="omission"/>
//! <seg type="insertion">
//!   <s n="2">...</s>
//! </seg>
//! ```
//!
//! Target segments sit in `<s n="k">` children (1-based within the chapter)
//! so the alignment can be read back from the file.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};

use quick_xml::escape::{escape, partial_escape, resolve_predefined_entity};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::model::{Bead, BeadType, Chapter, Document, Granularity, Segment, Token};

const TEI_NS: &str = "http://www.tei-c.org/ns/1.0";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TeiError {
    #[error("malformed XML at line {line}, column {column}: {message}")]
    Xml { line: usize, column: usize, message: String },
    #[error("duplicate xml:id {id} at line {line}, column {column}")]
    DuplicateId { id: String, line: usize, column: usize },
    #[error("<w> outside any <s> at line {line}, column {column}")]
    WordOutsideSentence { line: usize, column: usize },
    #[error("<{element}> without {attribute} at line {line}, column {column}")]
    MissingAttribute { element: String, attribute: &'static str, line: usize, column: usize },
    #[error("invalid content at line {line}, column {column}: {message}")]
    Content { line: usize, column: usize, message: String },
    #[error("bead {bead} of chapter {chapter} cannot be anchored: {reason}")]
    Unanchored { chapter: String, bead: usize, reason: String },
    #[error("unknown source chapter {0}")]
    UnknownChapter(String),
}

/// 1-based line and column (in characters) of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text.as_bytes()[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let line_start = before.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    let column = String::from_utf8_lossy(&before[line_start..]).chars().count() + 1;
    (line, column)
}

struct Cursor<'a> {
    text: &'a str,
    reader: Reader<&'a [u8]>,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Result<Self, TeiError> {
        let text = std::str::from_utf8(bytes).map_err(|e| {
            let (line, column) = line_column(&String::from_utf8_lossy(bytes), e.valid_up_to());
            TeiError::Xml { line, column, message: "invalid UTF-8".into() }
        })?;
        let mut reader = Reader::from_str(text);
        reader.config_mut().check_end_names = true;
        Ok(Cursor { text, reader })
    }

    fn here(&self) -> (usize, usize) {
        line_column(self.text, self.reader.buffer_position() as usize)
    }

    fn next(&mut self) -> Result<Event<'a>, TeiError> {
        self.reader.read_event().map_err(|e| {
            let (line, column) = line_column(self.text, self.reader.error_position() as usize);
            TeiError::Xml { line, column, message: e.to_string() }
        })
    }

    fn xml_error(&self, message: impl Into<String>) -> TeiError {
        let (line, column) = self.here();
        TeiError::Xml { line, column, message: message.into() }
    }

    fn content_error(&self, message: impl Into<String>) -> TeiError {
        let (line, column) = self.here();
        TeiError::Content { line, column, message: message.into() }
    }

    fn attr(&self, e: &BytesStart, name: &str) -> Result<Option<String>, TeiError> {
        for a in e.attributes() {
            let a = a.map_err(|err| self.xml_error(err.to_string()))?;
            if a.key.as_ref() == name.as_bytes() {
                let v = a.unescape_value().map_err(|err| self.xml_error(err.to_string()))?;
                return Ok(Some(v.into_owned()));
            }
        }
        Ok(None)
    }

    /// Text of a character-data event, entities resolved.
    fn text_of(&self, event: &Event) -> Result<Option<String>, TeiError> {
        Ok(match event {
            Event::Text(t) => Some(t.xml_content().map_err(|e| self.xml_error(e.to_string()))?.into_owned()),
            Event::CData(c) => Some(c.xml_content().map_err(|e| self.xml_error(e.to_string()))?.into_owned()),
            Event::GeneralRef(r) => {
                if let Some(c) = r.resolve_char_ref().map_err(|e| self.xml_error(e.to_string()))? {
                    Some(c.to_string())
                } else {
                    let name = r.decode().map_err(|e| self.xml_error(e.to_string()))?;
                    let v = resolve_predefined_entity(&name)
                        .ok_or_else(|| self.xml_error(format!("unknown entity &{name};")))?;
                    Some(v.to_string())
                }
            }
            _ => None,
        })
    }
}

fn local(name: &[u8]) -> &[u8] {
    name.rsplit(|&b| b == b':').next().unwrap_or(name)
}

enum Piece {
    Space,
    Text(String),
    Token(String, String),
}

#[derive(Default)]
struct SourceBuilder {
    doc: Document,
    text_chars: usize,
    ids: HashSet<String>,
}

impl SourceBuilder {
    fn open_chapter(&mut self, key: String) {
        self.doc.chapters.push(Chapter { key, segments: Vec::new() });
    }

    /// Appends one sentence. Inner whitespace runs collapse to one space,
    /// leading and trailing whitespace is dropped.
    fn push_sentence(&mut self, pieces: Vec<Piece>) {
        if self.doc.chapters.is_empty() {
            self.open_chapter("1".into());
        }
        let separator = if self.doc.chapters.last().is_some_and(|c| c.segments.is_empty()) { "\n" } else { " " };
        if let Some(prev) = self.doc.chapters.iter_mut().rev().find_map(|c| c.segments.last_mut()) {
            prev.ws_after = separator.to_string();
            self.doc.text.push_str(separator);
            self.text_chars += 1;
        }
        let mut text = String::new();
        let mut first_token = None;
        let mut pending_space = false;
        let mut pos = self.text_chars;
        for piece in pieces {
            let (content, token) = match piece {
                Piece::Space => {
                    pending_space = !text.is_empty();
                    continue;
                }
                Piece::Text(t) => (t, None),
                Piece::Token(id, t) => (t.clone(), Some((id, t))),
            };
            if pending_space {
                text.push(' ');
                pos += 1;
                pending_space = false;
            }
            let len = content.chars().count();
            if let Some((id, t)) = token {
                first_token.get_or_insert(self.doc.tokens.len());
                self.doc.tokens.push(Token { id, text: t, char_start: pos, char_end: pos + len });
            }
            text.push_str(&content);
            pos += len;
        }
        self.text_chars = pos;
        self.doc.text.push_str(&text);
        let chapter = self.doc.chapters.last_mut().expect("opened above");
        let mut seg = Segment::new(&self.doc.doc_id, chapter.segments.len(), text, Granularity::Sentence);
        seg.token_span = first_token.map(|f| [f, self.doc.tokens.len() - 1]);
        chapter.segments.push(seg);
    }
}

/// Parses a token-identified source TEI file into a [`Document`].
pub fn parse_source_tei(xml: &[u8], doc_id: &str) -> Result<Document, TeiError> {
    let mut cur = Cursor::new(xml)?;
    let mut b = SourceBuilder::default();
    b.doc.doc_id = doc_id.to_string();
    b.doc.lang = "und".into();
    let mut sentence: Option<Vec<Piece>> = None;
    let mut word: Option<(String, String)> = None;
    let mut chapters_seen = 0;
    loop {
        let event = cur.next()?;
        match &event {
            Event::Eof => break,
            Event::Start(e) | Event::Empty(e) => {
                let empty = matches!(event, Event::Empty(_));
                match local(e.name().as_ref()) {
                    b"TEI" | b"text" => {
                        if let Some(lang) = cur.attr(e, "xml:lang")? {
                            b.doc.lang = lang;
                        }
                    }
                    b"div" if cur.attr(e, "type")?.as_deref() == Some("chapter") => {
                        chapters_seen += 1;
                        let key = cur.attr(e, "n")?.unwrap_or_else(|| chapters_seen.to_string());
                        b.open_chapter(key);
                    }
                    b"s" => {
                        if sentence.is_some() {
                            return Err(cur.content_error("nested <s>"));
                        }
                        if empty {
                            b.push_sentence(Vec::new());
                        } else {
                            sentence = Some(Vec::new());
                        }
                    }
                    b"w" => {
                        let (line, column) = cur.here();
                        if sentence.is_none() {
                            return Err(TeiError::WordOutsideSentence { line, column });
                        }
                        let id = cur.attr(e, "xml:id")?.ok_or(TeiError::MissingAttribute {
                            element: "w".into(),
                            attribute: "xml:id",
                            line,
                            column,
                        })?;
                        if !b.ids.insert(id.clone()) {
                            return Err(TeiError::DuplicateId { id, line, column });
                        }
                        if empty {
                            return Err(cur.content_error(format!("token {id} is empty")));
                        }
                        if word.is_some() {
                            return Err(cur.content_error("nested <w>"));
                        }
                        word = Some((id, String::new()));
                    }
                    _ => {
                        if let Some(id) = cur.attr(e, "xml:id")? {
                            if !b.ids.insert(id.clone()) {
                                let (line, column) = cur.here();
                                return Err(TeiError::DuplicateId { id, line, column });
                            }
                        }
                    }
                }
            }
            Event::End(e) => match local(e.name().as_ref()) {
                b"w" => {
                    let (id, text) = word.take().expect("reader checks end names");
                    if text.is_empty() || text.chars().any(char::is_whitespace) {
                        return Err(cur.content_error(format!("token {id} is empty or contains whitespace")));
                    }
                    sentence.as_mut().expect("w only opens inside s").push(Piece::Token(id, text));
                }
                b"s" => {
                    let pieces = sentence.take().expect("reader checks end names");
                    b.push_sentence(pieces);
                }
                _ => {}
            },
            _ => {
                if let Some(text) = cur.text_of(&event)? {
                    if let Some((_, w)) = word.as_mut() {
                        w.push_str(&text);
                    } else if let Some(pieces) = sentence.as_mut() {
                        split_pieces(&text, pieces);
                    }
                }
            }
        }
    }
    Ok(b.doc)
}

fn split_pieces(text: &str, pieces: &mut Vec<Piece>) {
    let mut run = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !run.is_empty() {
                pieces.push(Piece::Text(std::mem::take(&mut run)));
            }
            pieces.push(Piece::Space);
        } else {
            run.push(c);
        }
    }
    if !run.is_empty() {
        pieces.push(Piece::Text(run));
    }
}

fn header(out: &mut String, title: &str) {
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<TEI xmlns=\"{TEI_NS}\">");
    out.push_str("  <teiHeader>\n    <fileDesc>\n      <titleStmt>\n");
    let _ = writeln!(out, "        <title>{}</title>", partial_escape(title));
    out.push_str("      </titleStmt>\n      <publicationStmt>\n        <p>Generated file.</p>\n");
    out.push_str("      </publicationStmt>\n      <sourceDesc>\n        <p>Born digital.</p>\n");
    out.push_str("      </sourceDesc>\n    </fileDesc>\n  </teiHeader>\n");
}

/// Writes a source document as token-identified TEI.
pub fn encode_source_tei(doc: &Document) -> Vec<u8> {
    let mut out = String::new();
    header(&mut out, &doc.doc_id);
    let _ = writeln!(out, "  <text xml:lang=\"{}\">", escape(doc.lang.as_str()));
    out.push_str("    <body>\n");
    for chapter in &doc.chapters {
        let _ = writeln!(out, "      <div type=\"chapter\" n=\"{}\">", escape(chapter.key.as_str()));
        for seg in &chapter.segments {
            let _ = write!(out, "        <s n=\"{}\">", seg.index + 1);
            let tokens: &[Token] = match seg.token_span {
                Some([a, b]) => &doc.tokens[a..=b],
                None => &[],
            };
            let mut rest = seg.text.as_str();
            for t in tokens {
                // tokens appear in order inside the segment text
                let at = rest.find(t.text.as_str()).unwrap_or(0);
                out.push_str(&partial_escape(&rest[..at]));
                let _ = write!(out, "<w xml:id=\"{}\">{}</w>", escape(t.id.as_str()), partial_escape(t.text.as_str()));
                rest = &rest[at + t.text.len()..];
            }
            out.push_str(&partial_escape(rest));
            out.push_str("</s>\n");
        }
        out.push_str("      </div>\n");
    }
    out.push_str("    </body>\n  </text>\n</TEI>\n");
    out.into_bytes()
}

/// One aligned chapter of a translation.
#[derive(Debug, Clone, Copy)]
pub struct TranslationChapter<'a> {
    pub key: &'a str,
    pub beads: &'a [Bead],
    pub target: &'a [Segment],
}

fn anchors(
    doc: &Document,
    chapter: &Chapter,
    bead: &Bead,
    k: usize,
) -> Result<Option<(String, String)>, TeiError> {
    let (Some(&first), Some(&last)) = (bead.src.first(), bead.src.last()) else {
        return Ok(None);
    };
    let unanchored = |reason: String| TeiError::Unanchored { chapter: chapter.key.clone(), bead: k, reason };
    let span = |i: usize| -> Result<[usize; 2], TeiError> {
        let seg = chapter.segments.get(i).ok_or_else(|| unanchored(format!("no source segment {i}")))?;
        seg.token_span.ok_or_else(|| unanchored(format!("source segment {i} has no token span")))
    };
    let (a, b) = (span(first)?[0], span(last)?[1]);
    let id = |t: usize| doc.tokens.get(t).map(|t| t.id.clone()).ok_or_else(|| unanchored(format!("no token {t}")));
    Ok(Some((id(a)?, id(b)?)))
}

/// Writes the translation TEI for every aligned chapter, in the given order.
pub fn encode_translation_tei(
    source: &Document,
    target_doc: &str,
    target_lang: &str,
    chapters: &[TranslationChapter],
) -> Result<Vec<u8>, TeiError> {
    let mut out = String::new();
    header(&mut out, &format!("{target_doc} aligned to {}", source.doc_id));
    let _ = writeln!(
        out,
        "  <text xml:lang=\"{}\" n=\"{}\" source=\"{}\">",
        escape(target_lang),
        escape(target_doc),
        escape(source.doc_id.as_str())
    );
    out.push_str("    <body>\n");
    for ch in chapters {
        let src_chapter = source.chapter(ch.key).ok_or_else(|| TeiError::UnknownChapter(ch.key.to_string()))?;
        let _ = writeln!(out, "      <div type=\"chapter\" n=\"{}\">", escape(ch.key));
        for (k, bead) in ch.beads.iter().enumerate() {
            out.push_str("        <seg");
            if let Some((from, to)) = anchors(source, src_chapter, bead, k)? {
                let _ = write!(out, " from=\"#{}\" to=\"#{}\"", escape(from.as_str()), escape(to.as_str()));
            }
            let kind = match bead.kind {
                BeadType::Omission => "omission",
                BeadType::Insertion => "insertion",
                other => other.label(),
            };
            let _ = write!(out, " type=\"{kind}\"");
            if let Some(sim) = bead.similarity {
                let _ = write!(out, " sim=\"{sim:.3}\"");
            }
            if bead.tgt.is_empty() {
                out.push_str("/>\n");
                continue;
            }
            out.push_str(">\n");
            for &j in &bead.tgt {
                let seg = ch.target.get(j).ok_or_else(|| TeiError::Unanchored {
                    chapter: ch.key.to_string(),
                    bead: k,
                    reason: format!("no target segment {j}"),
                })?;
                let _ = writeln!(out, "          <s n=\"{}\">{}</s>", j + 1, partial_escape(seg.text.as_str()));
            }
            out.push_str("        </seg>\n");
        }
        out.push_str("      </div>\n");
    }
    out.push_str("    </body>\n  </text>\n</TEI>\n");
    Ok(out.into_bytes())
}

/// A `<seg>` as written in a translation file.
#[derive(Debug, Clone, PartialEq)]
pub struct SegRecord {
    pub line: usize,
    pub from: Option<String>,
    pub to: Option<String>,
    pub kind: String,
    pub sim: Option<f64>,
    /// `(1-based n, text)` of each child `<s>`.
    pub target: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationChapterRecord {
    pub key: String,
    pub segs: Vec<SegRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationTei {
    pub target_doc: String,
    pub source_doc: String,
    pub lang: String,
    pub chapters: Vec<TranslationChapterRecord>,
}

/// Reads a translation TEI file back into its seg records.
pub fn parse_translation_tei(xml: &[u8]) -> Result<TranslationTei, TeiError> {
    let mut cur = Cursor::new(xml)?;
    let mut out = TranslationTei { target_doc: String::new(), source_doc: String::new(), lang: "und".into(), chapters: Vec::new() };
    let mut seg: Option<SegRecord> = None;
    let mut s: Option<(usize, String)> = None;
    loop {
        let event = cur.next()?;
        match &event {
            Event::Eof => break,
            Event::Start(e) | Event::Empty(e) => {
                let empty = matches!(event, Event::Empty(_));
                match local(e.name().as_ref()) {
                    b"text" => {
                        out.lang = cur.attr(e, "xml:lang")?.unwrap_or_else(|| "und".into());
                        out.target_doc = cur.attr(e, "n")?.unwrap_or_default();
                        out.source_doc = cur.attr(e, "source")?.unwrap_or_default();
                    }
                    b"div" if cur.attr(e, "type")?.as_deref() == Some("chapter") => {
                        let key = cur.attr(e, "n")?.unwrap_or_else(|| (out.chapters.len() + 1).to_string());
                        out.chapters.push(TranslationChapterRecord { key, segs: Vec::new() });
                    }
                    b"seg" => {
                        let (line, column) = cur.here();
                        let strip = |v: Option<String>| v.map(|v| v.strip_prefix('#').map(str::to_string).unwrap_or(v));
                        let kind = cur.attr(e, "type")?.ok_or(TeiError::MissingAttribute {
                            element: "seg".into(),
                            attribute: "type",
                            line,
                            column,
                        })?;
                        let sim = match cur.attr(e, "sim")? {
                            Some(v) => Some(v.parse::<f64>().map_err(|_| cur.content_error(format!("bad sim {v:?}")))?),
                            None => None,
                        };
                        let rec = SegRecord {
                            line,
                            from: strip(cur.attr(e, "from")?),
                            to: strip(cur.attr(e, "to")?),
                            kind,
                            sim,
                            target: Vec::new(),
                        };
                        let chapter = out.chapters.last_mut().ok_or_else(|| cur.content_error("<seg> outside a chapter"))?;
                        if empty {
                            chapter.segs.push(rec);
                        } else {
                            seg = Some(rec);
                        }
                    }
                    b"s" if seg.is_some() => {
                        let n = cur
                            .attr(e, "n")?
                            .and_then(|v| v.parse::<usize>().ok())
                            .filter(|&n| n >= 1)
                            .ok_or_else(|| cur.content_error("<s> needs a positive n"))?;
                        if empty {
                            seg.as_mut().expect("checked").target.push((n, String::new()));
                        } else {
                            s = Some((n, String::new()));
                        }
                    }
                    _ => {}
                }
            }
            Event::End(e) => match local(e.name().as_ref()) {
                b"s" => {
                    if let (Some(done), Some(rec)) = (s.take(), seg.as_mut()) {
                        rec.target.push(done);
                    }
                }
                b"seg" => {
                    if let Some(rec) = seg.take() {
                        out.chapters.last_mut().expect("seg opened inside a chapter").segs.push(rec);
                    }
                }
                _ => {}
            },
            _ => {
                if let (Some(text), Some((_, buf))) = (cur.text_of(&event)?, s.as_mut()) {
                    buf.push_str(&text);
                }
            }
        }
    }
    Ok(out)
}

/// Rebuilds each chapter's bead sequence from a parsed translation file:
/// source sides from the token anchors, target sides from the `<s n>` children.
pub fn decode_beads(tei: &TranslationTei, source: &Document) -> Result<Vec<(String, Vec<Bead>)>, TeiError> {
    let index: HashMap<&str, usize> = source.tokens.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect();
    let mut out = Vec::new();
    for ch in &tei.chapters {
        let src_chapter = source.chapter(&ch.key).ok_or_else(|| TeiError::UnknownChapter(ch.key.clone()))?;
        let mut beads = Vec::new();
        for (k, rec) in ch.segs.iter().enumerate() {
            let unanchored = |reason: String| TeiError::Unanchored { chapter: ch.key.clone(), bead: k, reason };
            let src: Vec<usize> = match (&rec.from, &rec.to) {
                (Some(from), Some(to)) => {
                    let resolve = |id: &str| index.get(id).copied().ok_or_else(|| unanchored(format!("unknown token {id}")));
                    let (a, b) = (resolve(from)?, resolve(to)?);
                    src_chapter
                        .segments
                        .iter()
                        .filter(|s| s.token_span.is_some_and(|[x, y]| x >= a && y <= b))
                        .map(|s| s.index)
                        .collect()
                }
                (None, None) => Vec::new(),
                _ => return Err(unanchored("only one of from/to present".into())),
            };
            let tgt: Vec<usize> = rec.target.iter().map(|(n, _)| n - 1).collect();
            let bead = Bead::new(src, tgt, rec.sim).ok_or_else(|| unanchored("seg covers no segment".into()))?;
            let expected = match bead.kind {
                BeadType::Omission => "omission",
                BeadType::Insertion => "insertion",
                other => other.label(),
            };
            if rec.kind != expected {
                return Err(unanchored(format!("type {} but anchors give {expected}", rec.kind)));
            }
            beads.push(bead);
        }
        out.push((ch.key.clone(), beads));
    }
    Ok(out)
}

/// A broken link in a translation file. Segs are numbered from 1 in document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinkViolation {
    Unparsable(String),
    Unresolved { seg: usize, id: String },
    MissingAnchor { seg: usize },
    Reversed { seg: usize },
    Crossing { previous: usize, seg: usize },
}

impl fmt::Display for LinkViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkViolation::Unparsable(m) => write!(f, "unparsable translation: {m}"),
            LinkViolation::Unresolved { seg, id } => write!(f, "seg {seg}: #{id} does not resolve"),
            LinkViolation::MissingAnchor { seg } => write!(f, "seg {seg}: anchored type without from/to"),
            LinkViolation::Reversed { seg } => write!(f, "seg {seg}: from follows to"),
            LinkViolation::Crossing { previous, seg } => write!(f, "seg {seg} starts inside or before seg {previous}"),
        }
    }
}

/// Checks that every anchor resolves, spans are ordered, and consecutive
/// anchored segs do not cross.
pub fn validate_links(xml: &[u8], source: &Document) -> Vec<LinkViolation> {
    let tei = match parse_translation_tei(xml) {
        Ok(t) => t,
        Err(e) => return vec![LinkViolation::Unparsable(e.to_string())],
    };
    let index: HashMap<&str, usize> = source.tokens.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect();
    let mut out = Vec::new();
    let mut previous: Option<(usize, usize)> = None;
    let segs = tei.chapters.iter().flat_map(|c| &c.segs);
    for (k, rec) in segs.enumerate() {
        let seg = k + 1;
        let (from, to) = match (&rec.from, &rec.to) {
            (Some(a), Some(b)) => (a, b),
            (None, None) if rec.kind == "insertion" => continue,
            _ => {
                out.push(LinkViolation::MissingAnchor { seg });
                continue;
            }
        };
        let mut resolve = |id: &String| {
            let i = index.get(id.as_str()).copied();
            if i.is_none() {
                out.push(LinkViolation::Unresolved { seg, id: id.clone() });
            }
            i
        };
        let (Some(a), Some(b)) = (resolve(from), resolve(to)) else {
            continue;
        };
        if a > b {
            out.push(LinkViolation::Reversed { seg });
        }
        if let Some((p, prev_to)) = previous {
            if a <= prev_to {
                out.push(LinkViolation::Crossing { previous: p, seg });
            }
        }
        previous = Some((seg, b));
    }
    out
}
