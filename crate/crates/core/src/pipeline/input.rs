//! Plain-text documents and their segmentation at each granularity.
//!
//! A document file is UTF-8 text where `# <key>` lines open chapters and
//! every other non-blank line is a paragraph. An optional sidecar
//! `<file>.meta.toml` may set `doc_id`, `lang` and `label`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{reassemble, reindex, tokenize, Chapter, Document, Granularity, Segment};
use crate::segmentation::llm::LlmSegmenter;
use crate::segmentation::{split_punctuation, split_sentences, SegmentError, SegmenterConfig};
use crate::tei::{parse_source_tei, TeiError};

#[derive(Debug, thiserror::Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}, line {line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Meta { path: String, source: toml::de::Error },
    #[error("{path}: {source}")]
    Tei { path: String, source: TeiError },
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentMeta {
    pub doc_id: Option<String>,
    pub lang: Option<String>,
    pub label: Option<String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.toml");
    path.with_file_name(name)
}

pub fn read_meta(path: &Path) -> Result<DocumentMeta, InputError> {
    let side = sidecar_path(path);
    if !side.is_file() {
        return Ok(DocumentMeta::default());
    }
    let text = std::fs::read_to_string(&side).map_err(|source| InputError::Io { path: side.display().to_string(), source })?;
    toml::from_str(&text).map_err(|source| InputError::Meta { path: side.display().to_string(), source })
}

/// Chapters of a plain-text document as `(key, body)`, bodies being the
/// chapter's non-blank lines joined by `\n`.
pub fn parse_plain(text: &str, path: &str) -> Result<Vec<(String, String)>, InputError> {
    let mut chapters: Vec<(String, Vec<&str>)> = Vec::new();
    let has_headings = text.lines().any(|l| l.starts_with("# "));
    if !has_headings {
        chapters.push(("1".into(), Vec::new()));
    }
    for (n, line) in text.lines().enumerate() {
        if let Some(key) = line.strip_prefix("# ") {
            let key = key.trim();
            let bad = |message: String| InputError::Format { path: path.to_string(), line: n + 1, message };
            if key.is_empty() {
                return Err(bad("empty chapter key".into()));
            }
            if chapters.iter().any(|(k, _)| k == key) {
                return Err(bad(format!("chapter {key} appears twice")));
            }
            chapters.push((key.to_string(), Vec::new()));
        } else if !line.trim().is_empty() {
            match chapters.last_mut() {
                Some((_, lines)) => lines.push(line.trim_end()),
                None => {
                    return Err(InputError::Format {
                        path: path.to_string(),
                        line: n + 1,
                        message: "text before the first chapter heading".into(),
                    })
                }
            }
        }
    }
    Ok(chapters.into_iter().map(|(k, lines)| (k, lines.join("\n"))).collect())
}

pub fn write_plain(chapters: &[(String, String)]) -> String {
    let mut out = String::new();
    for (key, body) in chapters {
        out.push_str("# ");
        out.push_str(key);
        out.push('\n');
        out.push_str(body);
        if !body.is_empty() {
            out.push('\n');
        }
    }
    out
}

/// One sentence the LLM strategy could not split and that fell back to punctuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fallback {
    pub doc: String,
    pub chapter: String,
    pub sentence: usize,
    pub reason: String,
}

/// How phrases are made from sentences.
pub enum PhraseMethod<'a> {
    Punctuation,
    Llm { segmenter: &'a LlmSegmenter, exemplars: &'a [(String, Vec<String>)] },
}

/// Builds the document at `granularity` from sentence-level chapters.
/// Tokens are recomputed from the document text unless `tokens` is given.
fn assemble(
    doc_id: &str,
    lang: &str,
    sentence_chapters: Vec<(String, Vec<Segment>)>,
    granularity: Granularity,
    cfg: &SegmenterConfig,
    phrases: &PhraseMethod,
    tokens: Option<Vec<crate::model::Token>>,
) -> Result<(Document, Vec<Fallback>), InputError> {
    let mut fallbacks = Vec::new();
    let mut doc = Document { doc_id: doc_id.to_string(), lang: lang.to_string(), ..Default::default() };
    for (key, sentences) in sentence_chapters {
        let mut segments = match (granularity, phrases) {
            (Granularity::Sentence, _) => sentences,
            (Granularity::Phrase, PhraseMethod::Punctuation) => split_punctuation(&sentences, cfg),
            (Granularity::Phrase, PhraseMethod::Llm { segmenter, exemplars }) => {
                let mut out = Vec::new();
                for s in &sentences {
                    let outcome = segmenter.segment(s, exemplars, cfg)?;
                    if let Some(reason) = outcome.fallback {
                        fallbacks.push(Fallback { doc: doc_id.into(), chapter: key.clone(), sentence: s.index, reason });
                    }
                    out.extend(outcome.segments);
                }
                out
            }
        };
        for s in &mut segments {
            s.token_span = None;
        }
        reindex(&mut segments, doc_id);
        doc.text.push_str(&reassemble(&segments));
        doc.chapters.push(Chapter { key, segments });
    }
    doc.tokens = tokens.unwrap_or_else(|| tokenize(&doc.text));
    doc.assign_token_spans();
    Ok((doc, fallbacks))
}

/// Segments plain-text chapters. Chapters are separated by a newline
/// recorded after each chapter's last segment.
pub fn segment_plain(
    doc_id: &str,
    lang: &str,
    chapters: &[(String, String)],
    granularity: Granularity,
    cfg: &SegmenterConfig,
    phrases: &PhraseMethod,
) -> Result<(Document, Vec<Fallback>), InputError> {
    cfg.validate()?;
    let count = chapters.len();
    let sentence_chapters = chapters
        .iter()
        .enumerate()
        .map(|(i, (key, body))| {
            let mut sentences = split_sentences(body, doc_id, cfg);
            if i + 1 < count {
                if let Some(last) = sentences.last_mut() {
                    last.ws_after.push('\n');
                }
            }
            (key.clone(), sentences)
        })
        .collect();
    assemble(doc_id, lang, sentence_chapters, granularity, cfg, phrases, None)
}

/// Segments a token-identified TEI source. Sentences come from `<s>`,
/// tokens and their ids from `<w>`.
pub fn segment_tei(
    xml: &[u8],
    path: &str,
    doc_id: &str,
    lang: Option<&str>,
    granularity: Granularity,
    cfg: &SegmenterConfig,
    phrases: &PhraseMethod,
) -> Result<(Document, Vec<Fallback>), InputError> {
    cfg.validate()?;
    let parsed = parse_source_tei(xml, doc_id).map_err(|source| InputError::Tei { path: path.to_string(), source })?;
    let lang = lang.map(str::to_string).unwrap_or_else(|| parsed.lang.clone());
    let chapters: Vec<_> = parsed.chapters.into_iter().map(|c| (c.key, c.segments)).collect();
    if granularity == Granularity::Sentence {
        let mut doc = Document { doc_id: doc_id.to_string(), lang, text: parsed.text, chapters: Vec::new(), tokens: parsed.tokens };
        doc.chapters = chapters.into_iter().map(|(key, segments)| Chapter { key, segments }).collect();
        return Ok((doc, Vec::new()));
    }
    assemble(doc_id, &lang, chapters, granularity, cfg, phrases, Some(parsed.tokens))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_document;

    #[test]
    fn plain_format_round_trip() {
        let text = "# 1\nUno due. Tre.\n\nQuattro.\n# 2\nCinque.\n";
        let ch = parse_plain(text, "mem").unwrap();
        assert_eq!(ch, [("1".to_string(), "Uno due. Tre.\nQuattro.".to_string()), ("2".to_string(), "Cinque.".to_string())]);
        assert_eq!(parse_plain(&write_plain(&ch), "mem").unwrap(), ch);
    }

    #[test]
    fn headless_text_is_one_chapter_and_stray_text_is_refused() {
        assert_eq!(parse_plain("Solo.\n", "m").unwrap(), [("1".to_string(), "Solo.".to_string())]);
        assert!(matches!(parse_plain("x\n# 1\ny\n", "m"), Err(InputError::Format { line: 1, .. })));
        assert!(matches!(parse_plain("# 1\na\n# 1\nb\n", "m"), Err(InputError::Format { line: 3, .. })));
    }

    #[test]
    fn segmented_documents_validate_at_both_granularities() {
        let ch = parse_plain("# 1\nEra bello, pareva vero. Poi venne.\n# 2\nAltro giorno, altra storia e molto altro.", "m").unwrap();
        let cfg = SegmenterConfig::for_language("it").with_min_segment_chars(5);
        for g in [Granularity::Sentence, Granularity::Phrase] {
            let (doc, fb) = segment_plain("it", "it", &ch, g, &cfg, &PhraseMethod::Punctuation).unwrap();
            assert!(fb.is_empty());
            assert_eq!(validate_document(&doc), []);
            assert!(doc.chapters.iter().flat_map(|c| &c.segments).all(|s| s.token_span.is_some()));
        }
        let (phr, _) = segment_plain("it", "it", &ch, Granularity::Phrase, &cfg, &PhraseMethod::Punctuation).unwrap();
        assert_eq!(phr.chapters[0].segments.len(), 3);
        assert_eq!(phr.chapters[1].segments.len(), 2);
    }
}
