//! Static two-column edition: one HTML page per chapter and granularity,
//! plus the data files the interactive viewer reads.
//!
//! Every bead gets exactly one element in each column carrying `data-bead`
//! and `data-type`. Gap beads put their text in one column and a marker in
//! the other, so a bead id always resolves on both sides.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use quick_xml::escape::escape;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::AlignParams;
use crate::analysis::AnalysisReport;
use crate::model::{bead_id, segment_char_ranges, AlignmentResult, BeadType, Chapter, Document, Granularity, Segment};
use crate::schema::{self, SCHEMA};

pub const STYLESHEET: &str = include_str!("../assets/edition.css");
pub const STYLESHEET_NAME: &str = "edition.css";
pub const VIEWER_SCRIPT: &str = "viewer.js";

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("chapter {chapter} appears twice for {translation} at {granularity} granularity")]
    DuplicateChapter { translation: String, granularity: Granularity, chapter: String },
    #[error("translation {0} appears twice")]
    DuplicateTranslation(String),
    #[error("chapter {chapter}: {reason}")]
    ChapterMismatch { chapter: String, reason: String },
    #[error("{0:?} is not usable in a file name (letters, digits, '-' and '_' only)")]
    InvalidKey(String),
    #[error("nothing to render")]
    Empty,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RenderError + '_ {
    move |source| RenderError::Io { path: path.display().to_string(), source }
}

fn check_key(key: &str) -> Result<(), RenderError> {
    let ok = !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(RenderError::InvalidKey(key.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeadRecord {
    pub id: String,
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
    #[serde(rename = "type")]
    pub kind: BeadType,
    pub sim: Option<f64>,
    pub from_token: Option<String>,
    pub to_token: Option<String>,
}

/// Where a segment's text sits in its chapter, in characters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub index: usize,
    pub bead: String,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Body of a `.alignment` data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentData {
    pub translation: String,
    pub chapter: String,
    pub granularity: Granularity,
    pub source_doc: String,
    pub target_doc: String,
    pub provider: String,
    pub params: AlignParams,
    pub beads: Vec<BeadRecord>,
    pub source_segments: Vec<SegmentRecord>,
    pub target_segments: Vec<SegmentRecord>,
}

/// Body of a `.viz` data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizData {
    pub translation: String,
    pub chapter: String,
    pub granularity: Granularity,
    #[serde(flatten)]
    pub report: AnalysisReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestChapter {
    pub key: String,
    pub page: String,
    pub alignment: String,
    pub viz: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestGranularity {
    pub granularity: Granularity,
    pub chapters: Vec<ManifestChapter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTranslation {
    pub key: String,
    pub lang: String,
    pub label: String,
    pub granularities: Vec<ManifestGranularity>,
}

/// Body of `data/manifest.json`. Paths are relative to the site root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub title: String,
    pub source_doc: String,
    pub source_lang: String,
    pub translations: Vec<ManifestTranslation>,
}

/// One aligned chapter to render.
#[derive(Debug, Clone, Copy)]
pub struct ChapterView<'a> {
    pub key: &'a str,
    pub target: &'a [Segment],
    pub result: &'a AlignmentResult,
    pub analysis: Option<&'a AnalysisReport>,
}

#[derive(Debug, Clone, Default)]
pub struct RenderOptions {
    pub title: String,
    pub translation: String,
    pub translation_label: String,
    pub target_lang: String,
    pub granularity: Granularity,
    /// File stem shared by the page and its data files, e.g. `3` or `3.phrase`.
    pub stem: String,
    pub prev: Option<String>,
    pub next: Option<String>,
    /// `(granularity, page file name)` of the same chapter at other granularities.
    pub alternates: Vec<(Granularity, String)>,
    pub viewer: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedChapter {
    pub html: Vec<u8>,
    pub alignment: Vec<u8>,
    pub viz: Option<Vec<u8>>,
}

fn mismatch(chapter: &str, reason: impl Into<String>) -> RenderError {
    RenderError::ChapterMismatch { chapter: chapter.to_string(), reason: reason.into() }
}

fn alignment_data(source: &Document, src: &Chapter, view: &ChapterView, opts: &RenderOptions) -> AlignmentData {
    let token = |i: usize| source.tokens.get(i).map(|t| t.id.clone());
    let mut src_bead = vec![String::new(); src.segments.len()];
    let mut tgt_bead = vec![String::new(); view.target.len()];
    let beads = view
        .result
        .beads
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let id = bead_id(k);
            b.src.iter().for_each(|&i| src_bead[i] = id.clone());
            b.tgt.iter().for_each(|&j| tgt_bead[j] = id.clone());
            let first = b.src.first().and_then(|&i| src.segments[i].token_span).map(|s| s[0]);
            let last = b.src.last().and_then(|&i| src.segments[i].token_span).map(|s| s[1]);
            BeadRecord {
                id,
                src: b.src.clone(),
                tgt: b.tgt.clone(),
                kind: b.kind,
                sim: b.similarity,
                from_token: first.and_then(token),
                to_token: last.and_then(token),
            }
        })
        .collect();
    let records = |segs: &[Segment], owners: Vec<String>| -> Vec<SegmentRecord> {
        segment_char_ranges(segs, 0)
            .into_iter()
            .zip(segs.iter().zip(owners))
            .map(|((start, end), (s, bead))| SegmentRecord { index: s.index, bead, start, end, text: s.text.clone() })
            .collect()
    };
    AlignmentData {
        translation: opts.translation.clone(),
        chapter: view.key.to_string(),
        granularity: opts.granularity,
        source_doc: view.result.source_doc.clone(),
        target_doc: view.result.target_doc.clone(),
        provider: view.result.provider.clone(),
        params: view.result.params.clone(),
        beads,
        source_segments: records(&src.segments, src_bead),
        target_segments: records(view.target, tgt_bead),
    }
}

fn bead_open(out: &mut String, class: &str, id: &str, kind: BeadType, sim: Option<f64>) {
    let _ = write!(out, "<div class=\"{class}\" data-bead=\"{id}\" data-type=\"{}\"", kind.label());
    if let Some(s) = sim {
        let _ = write!(out, " data-sim=\"{s:.3}\"");
    }
    out.push('>');
}

fn column(out: &mut String, side: &str, lang: &str, view: &ChapterView, segs: &[Segment], source_side: bool) {
    let _ = writeln!(out, "<section class=\"column {side}\" lang=\"{}\">", escape(lang));
    for (k, b) in view.result.beads.iter().enumerate() {
        let id = bead_id(k);
        let idx = if source_side { &b.src } else { &b.tgt };
        if idx.is_empty() {
            let (class, note) = if source_side {
                ("marker insertion", "added in translation")
            } else {
                ("marker omission", "omitted in translation")
            };
            bead_open(out, class, &id, b.kind, None);
            let _ = writeln!(out, "{note}</div>");
            continue;
        }
        bead_open(out, "bead", &id, b.kind, b.similarity);
        for (n, &i) in idx.iter().enumerate() {
            if n > 0 {
                out.push(' ');
            }
            let _ = write!(out, "<span class=\"seg\" data-seg=\"{i}\">{}</span>", escape(segs[i].text.as_str()));
        }
        out.push_str("</div>\n");
    }
    out.push_str("</section>\n");
}

/// Renders one chapter page with its alignment and (when analysed) viz data.
pub fn render_chapter(source: &Document, view: &ChapterView, opts: &RenderOptions) -> Result<RenderedChapter, RenderError> {
    let src = source.chapter(view.key).ok_or_else(|| mismatch(view.key, "not in the source document"))?;
    let violations = view.result.partition_violations(src.segments.len(), view.target.len());
    if let Some(first) = violations.first() {
        return Err(mismatch(view.key, first.clone()));
    }
    let data_dir = format!("../data/{}", opts.translation);
    let mut html = String::new();
    let _ = writeln!(html, "<!DOCTYPE html>\n<html lang=\"{}\">\n<head>\n<meta charset=\"utf-8\">", escape(source.lang.as_str()));
    html.push_str("<meta name=\"viewport\" content=\"width=device-width, initial-scale=1\">\n");
    let heading = format!("{}: {}, chapter {}", opts.title, opts.translation_label, view.key);
    let _ = writeln!(html, "<title>{}</title>", escape(heading.as_str()));
    let _ = writeln!(html, "<link rel=\"stylesheet\" href=\"../assets/{STYLESHEET_NAME}\">\n</head>");
    let _ = write!(
        html,
        "<body data-schema=\"{SCHEMA}\" data-translation=\"{}\" data-chapter=\"{}\" data-granularity=\"{}\" \
         data-manifest=\"../data/manifest.json\" data-alignment=\"{data_dir}/{}.alignment\"",
        escape(opts.translation.as_str()),
        escape(view.key),
        opts.granularity,
        opts.stem
    );
    if view.analysis.is_some() {
        let _ = write!(html, " data-viz=\"{data_dir}/{}.viz\"", opts.stem);
    }
    html.push_str(">\n<nav>\n<a href=\"../index.html\">Index</a>\n");
    if let Some(p) = &opts.prev {
        let _ = writeln!(html, "<a href=\"{p}\" rel=\"prev\">Previous chapter</a>");
    }
    if let Some(n) = &opts.next {
        let _ = writeln!(html, "<a href=\"{n}\" rel=\"next\">Next chapter</a>");
    }
    for (g, page) in &opts.alternates {
        let _ = writeln!(html, "<a href=\"{page}\" class=\"granularity\">{g} segments</a>");
    }
    html.push_str("</nav>\n");
    let _ = writeln!(html, "<h1>{}</h1>\n<main class=\"edition\">", escape(heading.as_str()));
    column(&mut html, "source", &source.lang, view, &src.segments, true);
    column(&mut html, "target", &opts.target_lang, view, view.target, false);
    html.push_str("</main>\n");
    if opts.viewer {
        let _ = writeln!(html, "<script src=\"../assets/{VIEWER_SCRIPT}\" defer></script>");
    }
    html.push_str("</body>\n</html>\n");

    let alignment = schema::to_bytes("alignment", &alignment_data(source, src, view, opts));
    let viz = view.analysis.map(|report| {
        let body = VizData {
            translation: opts.translation.clone(),
            chapter: view.key.to_string(),
            granularity: opts.granularity,
            report: report.clone(),
        };
        schema::to_bytes("viz", &body)
    });
    Ok(RenderedChapter { html: html.into_bytes(), alignment, viz })
}

/// All chapters of one translation at one granularity.
#[derive(Debug, Clone)]
pub struct GranularityView<'a> {
    pub granularity: Granularity,
    /// The source document segmented at this granularity.
    pub source: &'a Document,
    pub chapters: Vec<ChapterView<'a>>,
}

#[derive(Debug, Clone)]
pub struct TranslationView<'a> {
    pub key: &'a str,
    pub lang: &'a str,
    pub label: &'a str,
    pub granularities: Vec<GranularityView<'a>>,
}

#[derive(Debug, Clone, Default)]
pub struct SiteOptions {
    pub title: String,
    /// Directory whose files are copied into `assets/`; enables the viewer script tag.
    pub viewer_assets: Option<PathBuf>,
}

/// Page and data file stem: the first granularity of a translation gets the
/// bare chapter key, later ones a `.<granularity>` suffix.
pub fn page_stem(chapter: &str, position: usize, granularity: Granularity) -> String {
    if position == 0 {
        chapter.to_string()
    } else {
        format!("{chapter}.{granularity}")
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), RenderError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

struct Job<'a> {
    source: &'a Document,
    view: ChapterView<'a>,
    opts: RenderOptions,
}

fn index_page(title: &str, manifest: &Manifest) -> String {
    let mut html = String::new();
    let _ = writeln!(html, "<!DOCTYPE html>\n<html lang=\"{}\">\n<head>\n<meta charset=\"utf-8\">", escape(manifest.source_lang.as_str()));
    let _ = writeln!(html, "<title>{}</title>", escape(title));
    let _ = writeln!(html, "<link rel=\"stylesheet\" href=\"assets/{STYLESHEET_NAME}\">\n</head>");
    let _ = writeln!(html, "<body data-schema=\"{SCHEMA}\" data-manifest=\"data/manifest.json\">");
    let _ = writeln!(html, "<h1>{}</h1>\n<main class=\"index\">\n<table>", escape(title));
    html.push_str("<tr><th>Translation</th><th>Segments</th><th>Chapters</th></tr>\n");
    for t in &manifest.translations {
        for g in &t.granularities {
            let _ = write!(html, "<tr><td>{} ({})</td><td>{}</td><td>", escape(t.label.as_str()), escape(t.lang.as_str()), g.granularity);
            let links: Vec<String> =
                g.chapters.iter().map(|c| format!("<a href=\"{}\">{}</a>", c.page, escape(c.key.as_str()))).collect();
            html.push_str(&links.join(" "));
            html.push_str("</td></tr>\n");
        }
    }
    html.push_str("</table>\n</main>\n</body>\n</html>\n");
    html
}

/// Writes the whole site under `out` and returns its manifest.
pub fn render_site(translations: &[TranslationView], opts: &SiteOptions, out: &Path) -> Result<Manifest, RenderError> {
    let first_source = translations
        .iter()
        .flat_map(|t| &t.granularities)
        .find(|g| !g.chapters.is_empty())
        .map(|g| g.source)
        .ok_or(RenderError::Empty)?;
    let mut manifest = Manifest {
        title: opts.title.clone(),
        source_doc: first_source.doc_id.clone(),
        source_lang: first_source.lang.clone(),
        translations: Vec::new(),
    };
    let mut jobs = Vec::new();
    let mut seen_translations = HashSet::new();
    for t in translations {
        check_key(t.key)?;
        if !seen_translations.insert(t.key) {
            return Err(RenderError::DuplicateTranslation(t.key.to_string()));
        }
        let mut entry = ManifestTranslation {
            key: t.key.to_string(),
            lang: t.lang.to_string(),
            label: t.label.to_string(),
            granularities: Vec::new(),
        };
        for (gi, g) in t.granularities.iter().enumerate() {
            let mut seen = HashSet::new();
            let mut chapters = Vec::new();
            for (ci, view) in g.chapters.iter().enumerate() {
                check_key(view.key)?;
                if !seen.insert(view.key) {
                    return Err(RenderError::DuplicateChapter {
                        translation: t.key.to_string(),
                        granularity: g.granularity,
                        chapter: view.key.to_string(),
                    });
                }
                let stem = page_stem(view.key, gi, g.granularity);
                let neighbour = |c: Option<&ChapterView>| c.map(|c| format!("{}.html", page_stem(c.key, gi, g.granularity)));
                let alternates = t
                    .granularities
                    .iter()
                    .enumerate()
                    .filter(|&(other, og)| other != gi && og.chapters.iter().any(|c| c.key == view.key))
                    .map(|(other, og)| (og.granularity, format!("{}.html", page_stem(view.key, other, og.granularity))))
                    .collect();
                chapters.push(ManifestChapter {
                    key: view.key.to_string(),
                    page: format!("{}/{stem}.html", t.key),
                    alignment: format!("data/{}/{stem}.alignment", t.key),
                    viz: view.analysis.map(|_| format!("data/{}/{stem}.viz", t.key)),
                });
                jobs.push(Job {
                    source: g.source,
                    view: *view,
                    opts: RenderOptions {
                        title: opts.title.clone(),
                        translation: t.key.to_string(),
                        translation_label: t.label.to_string(),
                        target_lang: t.lang.to_string(),
                        granularity: g.granularity,
                        stem,
                        prev: ci.checked_sub(1).and_then(|p| neighbour(g.chapters.get(p))),
                        next: neighbour(g.chapters.get(ci + 1)),
                        alternates,
                        viewer: opts.viewer_assets.is_some(),
                    },
                });
            }
            entry.granularities.push(ManifestGranularity { granularity: g.granularity, chapters });
        }
        manifest.translations.push(entry);
    }

    let rendered: Vec<RenderedChapter> =
        jobs.par_iter().map(|j| render_chapter(j.source, &j.view, &j.opts)).collect::<Result<_, _>>()?;
    for (job, page) in jobs.iter().zip(rendered) {
        let t = &job.opts.translation;
        write(&out.join(t).join(format!("{}.html", job.opts.stem)), &page.html)?;
        let data = out.join("data").join(t);
        write(&data.join(format!("{}.alignment", job.opts.stem)), &page.alignment)?;
        if let Some(viz) = page.viz {
            write(&data.join(format!("{}.viz", job.opts.stem)), &viz)?;
        }
    }
    write(&out.join("index.html"), index_page(&opts.title, &manifest).as_bytes())?;
    write(&out.join("data").join("manifest.json"), &schema::to_bytes("manifest", &manifest))?;
    write(&out.join("assets").join(STYLESHEET_NAME), STYLESHEET.as_bytes())?;
    if let Some(dir) = &opts.viewer_assets {
        let mut entries: Vec<_> = std::fs::read_dir(dir).map_err(io_err(dir))?.collect::<Result<_, _>>().map_err(io_err(dir))?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            if e.path().is_file() {
                let bytes = std::fs::read(e.path()).map_err(io_err(&e.path()))?;
                write(&out.join("assets").join(e.file_name()), &bytes)?;
            }
        }
    }
    Ok(manifest)
}

const LINK_ATTRS: [&str; 6] = ["href=\"", "src=\"", "data-alignment=\"", "data-viz=\"", "data-manifest=\"", "data-page=\""];

fn html_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            html_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "html") {
            out.push(path);
        }
    }
    Ok(())
}

/// Every link in the site's pages and manifest that does not resolve to a
/// file inside `root`, plus any reference to another host.
pub fn check_links(root: &Path) -> std::io::Result<Vec<String>> {
    let mut pages = Vec::new();
    html_files(root, &mut pages)?;
    pages.sort();
    let mut problems = Vec::new();
    let mut check = |from: &Path, base: &Path, target: &str| {
        let target = target.split('#').next().unwrap_or("");
        if target.is_empty() {
            return;
        }
        if target.contains("://") || target.starts_with("//") {
            problems.push(format!("{}: external reference {target}", from.display()));
        } else if !base.join(target).is_file() {
            problems.push(format!("{}: broken link {target}", from.display()));
        }
    };
    for page in &pages {
        let text = std::fs::read_to_string(page)?;
        let base = page.parent().unwrap_or(root);
        for attr in LINK_ATTRS {
            for (at, _) in text.match_indices(attr) {
                let rest = &text[at + attr.len()..];
                let value = &rest[..rest.find('"').unwrap_or(rest.len())];
                check(page, base, value);
            }
        }
    }
    let manifest_path = root.join("data").join("manifest.json");
    if manifest_path.is_file() {
        match schema::read_file::<Manifest>(&manifest_path, "manifest") {
            Ok(m) => {
                for c in m.translations.iter().flat_map(|t| &t.granularities).flat_map(|g| &g.chapters) {
                    for target in [Some(&c.page), Some(&c.alignment), c.viz.as_ref()].into_iter().flatten() {
                        check(&manifest_path, root, target);
                    }
                }
            }
            Err(e) => problems.push(e.to_string()),
        }
    }
    Ok(problems)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Bead;

    fn doc() -> Document {
        let mut d = Document { doc_id: "src".into(), lang: "it".into(), ..Default::default() };
        let texts = [("1", ["Era bello.", "Pareva vero."]), ("2", ["Poi venne.", "Se ne andò."])];
        let mut pos = 0;
        for (ci, (key, segs)) in texts.iter().enumerate() {
            let mut segments: Vec<Segment> =
                segs.iter().enumerate().map(|(i, t)| Segment::new("src", i, *t, Granularity::Sentence)).collect();
            segments[0].ws_after = " ".into();
            if ci == 0 {
                segments[1].ws_after = "\n".into();
            }
            for s in &segments {
                d.tokens.extend(crate::model::tokenize_from(&s.text, pos, d.tokens.len() + 1));
                pos += s.text.chars().count() + s.ws_after.chars().count();
            }
            d.text.push_str(&crate::model::reassemble(&segments));
            d.chapters.push(Chapter { key: key.to_string(), segments });
        }
        d.assign_token_spans();
        d
    }

    fn result(beads: Vec<Bead>) -> AlignmentResult {
        AlignmentResult {
            source_doc: "src".into(),
            target_doc: "de".into(),
            params: AlignParams::default(),
            provider: "mock".into(),
            beads,
        }
    }

    fn tgt(texts: &[&str]) -> Vec<Segment> {
        texts.iter().enumerate().map(|(i, t)| Segment::new("de", i, *t, Granularity::Sentence)).collect()
    }

    fn opts() -> RenderOptions {
        RenderOptions { title: "Edition".into(), translation: "de".into(), stem: "1".into(), ..Default::default() }
    }

    fn columns(html: &str) -> (String, String) {
        let src = html.split("<section class=\"column source\"").nth(1).unwrap().split("</section>").next().unwrap();
        let tgt = html.split("<section class=\"column target\"").nth(1).unwrap().split("</section>").next().unwrap();
        (src.to_string(), tgt.to_string())
    }

    #[test]
    fn one_to_one_bead_has_one_element_per_column() {
        let d = doc();
        let r = result(vec![Bead::span(0, 2, 0, 1, Some(0.8))]);
        let t = tgt(&["Es war schön und wahr."]);
        let view = ChapterView { key: "1", target: &t, result: &r, analysis: None };
        let page = render_chapter(&d, &view, &opts()).unwrap();
        let html = String::from_utf8(page.html).unwrap();
        let (s, g) = columns(&html);
        assert_eq!(s.matches("data-bead=\"b0001\"").count(), 1);
        assert_eq!(g.matches("data-bead=\"b0001\"").count(), 1);
        assert!(!html.contains("http"));
        assert!(page.viz.is_none());
        let data: AlignmentData = schema::from_bytes(&page.alignment, "alignment", "mem").unwrap();
        assert_eq!(data.beads[0].from_token.as_deref(), Some("w00001"));
        assert_eq!(data.beads[0].to_token.as_deref(), Some("w00006"));
        assert_eq!((data.source_segments[1].start, data.source_segments[1].end), (11, 23));
    }

    #[test]
    fn omission_gets_a_target_marker() {
        let d = doc();
        let r = result(vec![Bead::span(0, 1, 0, 0, None), Bead::span(1, 1, 0, 1, Some(0.9))]);
        let t = tgt(&["Es schien wahr."]);
        let view = ChapterView { key: "1", target: &t, result: &r, analysis: None };
        let html = String::from_utf8(render_chapter(&d, &view, &opts()).unwrap().html).unwrap();
        let (s, g) = columns(&html);
        assert!(g.contains("<div class=\"marker omission\" data-bead=\"b0001\" data-type=\"1-0\">"));
        assert!(s.contains("<div class=\"bead\" data-bead=\"b0001\" data-type=\"1-0\">"));
    }

    #[test]
    fn mismatched_chapter_is_refused() {
        let d = doc();
        let r = result(vec![Bead::span(0, 1, 0, 1, Some(0.9))]);
        let t = tgt(&["x"]);
        let view = ChapterView { key: "1", target: &t, result: &r, analysis: None };
        assert!(matches!(render_chapter(&d, &view, &opts()), Err(RenderError::ChapterMismatch { .. })));
        let view = ChapterView { key: "9", ..view };
        assert!(matches!(render_chapter(&d, &view, &opts()), Err(RenderError::ChapterMismatch { .. })));
    }

    #[test]
    fn site_layout_and_links() {
        let d = doc();
        let r = result(vec![Bead::span(0, 1, 0, 1, Some(0.9)), Bead::span(1, 1, 1, 1, Some(0.9))]);
        let t = tgt(&["a.", "b."]);
        let views = vec![
            ChapterView { key: "1", target: &t, result: &r, analysis: None },
            ChapterView { key: "2", target: &t, result: &r, analysis: None },
        ];
        let tr = TranslationView {
            key: "de",
            lang: "de",
            label: "German",
            granularities: vec![
                GranularityView { granularity: Granularity::Sentence, source: &d, chapters: views.clone() },
                GranularityView { granularity: Granularity::Phrase, source: &d, chapters: views.clone() },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let m = render_site(&[tr.clone()], &SiteOptions { title: "E".into(), viewer_assets: None }, dir.path()).unwrap();
        assert_eq!(m.translations[0].granularities.len(), 2);
        assert!(dir.path().join("de/1.html").is_file());
        assert!(dir.path().join("de/2.phrase.html").is_file());
        assert!(dir.path().join("data/de/1.phrase.alignment").is_file());
        assert_eq!(check_links(dir.path()).unwrap(), Vec::<String>::new());

        std::fs::remove_file(dir.path().join("de/2.html")).unwrap();
        let problems = check_links(dir.path()).unwrap();
        assert!(problems.iter().all(|p| p.contains("broken link") && p.contains("2.html")), "{problems:?}");
        assert!(!problems.is_empty());

        let dup = TranslationView {
            granularities: vec![GranularityView {
                granularity: Granularity::Sentence,
                source: &d,
                chapters: vec![views[0], views[0]],
            }],
            ..tr
        };
        let other = tempfile::tempdir().unwrap();
        assert!(matches!(
            render_site(&[dup], &SiteOptions::default(), other.path()),
            Err(RenderError::DuplicateChapter { .. })
        ));
    }
}
