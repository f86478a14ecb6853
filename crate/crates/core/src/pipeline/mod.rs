//! End-to-end orchestration: segment, embed, align, metrics, analyze,
//! encode-tei and render, each stage backed by a content-addressed cache.
//!
//! Work units are independent (document, granularity) or
//! (translation, granularity, chapter) triples and run on a bounded pool.
//! Every unit's cache key hashes its inputs' keys plus the parameters it
//! reads, so changing a parameter invalidates exactly the stages downstream
//! of it.

pub mod cache;
pub mod config;
pub mod input;
pub mod project;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::alignment::align;
use crate::analysis::{analyze, AnalysisReport};
use crate::embedding::{BlockEmbedder, EmbeddingProvider, FileProvider, HttpProvider, MockProvider};
use crate::metrics::{compare_granularities, compute_metrics, MetricsReport};
use crate::model::{AlignmentResult, Bead, Document, Granularity, Segment};
use crate::render::{render_site, ChapterView, GranularityView, SiteOptions, TranslationView};
use crate::schema;
use crate::segmentation::{HttpSegmentationService, LlmSegmenter, SegmenterConfig, Strategy};
use crate::tei::{encode_source_tei, encode_translation_tei, validate_links, TranslationChapter};

use cache::{cache_key, content_hash, copy_tree, write_atomic, StageCache};
pub use config::{ConfigError, PipelineConfig, ProviderKind, CACHE_ENV};
use input::{read_meta, segment_plain, segment_tei, Fallback, PhraseMethod};

/// Bumped whenever a stage's output format changes, to retire old cache entries.
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Segment,
    Embed,
    Align,
    Metrics,
    Analyze,
    EncodeTei,
    Render,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Segment, Stage::Embed, Stage::Align, Stage::Metrics, Stage::Analyze, Stage::EncodeTei, Stage::Render];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Segment => "segment",
            Stage::Embed => "embed",
            Stage::Align => "align",
            Stage::Metrics => "metrics",
            Stage::Analyze => "analyze",
            Stage::EncodeTei => "encode-tei",
            Stage::Render => "render",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Ok,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub status: StageStatus,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub duration_ms: u64,
    pub inputs: Vec<String>,
    pub params: Value,
    /// Cache key of every work unit, by unit name.
    pub keys: BTreeMap<String, String>,
    pub summary: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StageReport {
    fn pending(stage: Stage) -> Self {
        StageReport {
            stage,
            status: StageStatus::NotRun,
            cache_hits: 0,
            cache_misses: 0,
            duration_ms: 0,
            inputs: Vec::new(),
            params: Value::Null,
            keys: BTreeMap::new(),
            summary: Value::Null,
            error: None,
        }
    }

    /// True when every unit of a completed stage came from the cache.
    pub fn all_cached(&self) -> bool {
        self.status == StageStatus::Ok && self.cache_misses == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub title: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    pub output: PathBuf,
    pub cache_dir: PathBuf,
    pub duration_ms: u64,
    pub stages: Vec<StageReport>,
    /// Sentences whose service segmentation was rejected and replaced by punctuation splitting.
    pub fallbacks: Vec<Fallback>,
}

impl RunReport {
    pub fn stage(&self, stage: Stage) -> &StageReport {
        self.stages.iter().find(|s| s.stage == stage).expect("every stage has an entry")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String, report: Box<RunReport> },
}

impl PipelineError {
    pub fn report(&self) -> Option<&RunReport> {
        match self {
            PipelineError::Stage { report, .. } => Some(report),
            PipelineError::Config(_) => None,
        }
    }
}

/// Subdirectories of the output tree owned by the pipeline; cleared at the start of every run.
pub const MANAGED_OUTPUTS: [&str; 6] = ["segments", "alignments", "metrics", "analysis", "tei", "site"];
pub const REPORT_FILE: &str = "report.json";

fn ms(d: Duration) -> u64 {
    d.as_millis().min(u64::MAX as u128) as u64
}

/// Runs every stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    run_through(cfg, Stage::Render)
}

/// Runs the stages up to and including `last`; later stages are reported as not run.
pub fn run_through(cfg: &PipelineConfig, last: Stage) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| ConfigError::Invalid(format!("worker pool: {e}")))?;
    let mut run = Run::new(cfg)?;
    let mut report = RunReport {
        title: cfg.title.clone(),
        status: StageStatus::Ok,
        failed_stage: None,
        output: cfg.output.clone(),
        cache_dir: run.cache_root.clone(),
        duration_ms: 0,
        stages: Stage::ALL.iter().map(|&s| StageReport::pending(s)).collect(),
        fallbacks: Vec::new(),
    };
    let mut failure = None;
    for stage in Stage::ALL.into_iter().filter(|&s| s <= last) {
        let t0 = Instant::now();
        let entry = &mut report.stages[stage as usize];
        let outcome = if cfg.fail_at_stage == Some(stage) {
            Err(format!("aborted at the start of {stage} as configured by fail_at_stage"))
        } else {
            pool.install(|| run.stage(stage, entry))
        };
        entry.duration_ms = ms(t0.elapsed());
        match outcome {
            Ok(()) => entry.status = StageStatus::Ok,
            Err(message) => {
                log::error!("stage {stage} failed: {message}");
                entry.status = StageStatus::Failed;
                entry.error = Some(message.clone());
                report.status = StageStatus::Failed;
                report.failed_stage = Some(stage);
                failure = Some((stage, message));
                break;
            }
        }
    }
    report.fallbacks = run.fallbacks();
    report.duration_ms = ms(started.elapsed());
    let report_path = cfg.output.join(REPORT_FILE);
    let written = schema::write_file(&report_path, "run-report", &report).map_err(|e| e.to_string());
    match (failure, written) {
        (Some((stage, message)), _) => Err(PipelineError::Stage { stage, message, report: Box::new(report) }),
        (None, Err(message)) => {
            Err(PipelineError::Stage { stage: last, message: format!("writing the run report: {message}"), report: Box::new(report) })
        }
        (None, Ok(())) => Ok(report),
    }
}

/// A document segmented at one granularity.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Segmented {
    doc: Document,
    fallbacks: Vec<Fallback>,
}

struct Doc {
    input: config::DocumentInput,
    key: String,
    doc_id: String,
    lang: String,
    label: String,
    /// One entry per configured granularity, filled by the segment stage.
    levels: Vec<(String, Arc<Segmented>)>,
}

/// One aligned chapter: translation `t`, granularity position `g`, source
/// and target chapter positions.
#[derive(Debug, Clone, Copy)]
struct Unit {
    t: usize,
    g: usize,
    src_ch: usize,
    tgt_ch: usize,
}

struct Run<'c> {
    cfg: &'c PipelineConfig,
    cache_root: PathBuf,
    source: Doc,
    targets: Vec<Doc>,
    embedder: Option<Arc<BlockEmbedder<f64>>>,
    units: Vec<Unit>,
    alignments: Vec<(String, Arc<AlignmentResult>)>,
    analyses: Vec<(String, Arc<AnalysisReport>)>,
}

fn io_msg(path: &Path) -> impl Fn(std::io::Error) -> String + '_ {
    move |e| format!("{}: {e}", path.display())
}

impl<'c> Run<'c> {
    fn new(cfg: &'c PipelineConfig) -> Result<Self, ConfigError> {
        let doc = |input: &config::DocumentInput, key: String| -> Result<Doc, ConfigError> {
            if !input.path.is_file() {
                return Err(ConfigError::Invalid(format!("input {} does not exist", input.path.display())));
            }
            let meta = read_meta(&input.path).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Ok(Doc {
                input: input.clone(),
                doc_id: input.doc_id.clone().or(meta.doc_id).unwrap_or_else(|| key.clone()),
                lang: input.lang.clone().or(meta.lang).unwrap_or_default(),
                label: input.label.clone().or(meta.label).unwrap_or_else(|| key.clone()),
                key,
                levels: Vec::new(),
            })
        };
        let source = doc(&cfg.source, cfg.source_key())?;
        let targets = cfg
            .translations
            .iter()
            .zip(cfg.translation_keys())
            .map(|(i, k)| doc(i, k))
            .collect::<Result<Vec<_>, _>>()?;
        let mut ids = vec![source.doc_id.as_str()];
        for t in &targets {
            if ids.contains(&t.doc_id.as_str()) {
                return Err(ConfigError::Invalid(format!("document id `{}` is used twice", t.doc_id)));
            }
            ids.push(&t.doc_id);
        }
        Ok(Run {
            cfg,
            cache_root: cfg.cache_root(),
            source,
            targets,
            embedder: None,
            units: Vec::new(),
            alignments: Vec::new(),
            analyses: Vec::new(),
        })
    }

    fn granularities(&self) -> &[Granularity] {
        &self.cfg.segmentation.granularities
    }

    fn fallbacks(&self) -> Vec<Fallback> {
        std::iter::once(&self.source)
            .chain(&self.targets)
            .flat_map(|d| d.levels.iter().flat_map(|(_, s)| s.fallbacks.iter().cloned()))
            .collect()
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.cfg.output.join(rel)
    }

    fn src_chapter(&self, u: &Unit) -> &crate::model::Chapter {
        &self.source.levels[u.g].1.doc.chapters[u.src_ch]
    }

    fn tgt_chapter(&self, u: &Unit) -> &crate::model::Chapter {
        &self.targets[u.t].levels[u.g].1.doc.chapters[u.tgt_ch]
    }

    fn unit_name(&self, u: &Unit) -> String {
        format!("{}/{}/{}", self.targets[u.t].key, self.granularities()[u.g], self.src_chapter(u).key)
    }

    fn stage(&mut self, stage: Stage, entry: &mut StageReport) -> Result<(), String> {
        match stage {
            Stage::Segment => self.segment(entry),
            Stage::Embed => self.embed(entry),
            Stage::Align => self.align(entry),
            Stage::Metrics => self.metrics(entry),
            Stage::Analyze => self.analyze(entry),
            Stage::EncodeTei => self.encode_tei(entry),
            Stage::Render => self.render(entry),
        }
    }

    fn segment(&mut self, entry: &mut StageReport) -> Result<(), String> {
        for dir in MANAGED_OUTPUTS {
            let p = self.out(dir);
            if p.exists() {
                std::fs::remove_dir_all(&p).map_err(io_msg(&p))?;
            }
        }
        let cfg: &'c PipelineConfig = self.cfg;
        let seg = &cfg.segmentation;
        let llm = match (seg.strategy, seg.llm.endpoint.as_deref()) {
            (Strategy::Llm, Some(endpoint)) => {
                let token = seg.llm.token_env.as_deref().and_then(|v| std::env::var(v).ok());
                let service = HttpSegmentationService::new(endpoint, seg.llm.model.clone(), token);
                Some(
                    LlmSegmenter::new(Arc::new(service))
                        .with_cache_dir(self.cache_root.join("llm"))
                        .with_retries(seg.llm.attempts, Duration::from_millis(seg.llm.backoff_ms)),
                )
            }
            _ => None,
        };
        let exemplars: Vec<(String, Vec<String>)> = match (&llm, &seg.llm.exemplars) {
            (Some(_), Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(io_msg(path))?;
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
            }
            _ => Vec::new(),
        };
        let phrases = match &llm {
            Some(segmenter) => PhraseMethod::Llm { segmenter, exemplars: &exemplars },
            None => PhraseMethod::Punctuation,
        };
        let method = match &llm {
            Some(_) => json!({"strategy": "llm", "model": seg.llm.model, "exemplars": exemplars}),
            None => json!({"strategy": seg.strategy}),
        };
        entry.params = json!({
            "granularities": seg.granularities,
            "min_segment_chars": seg.min_segment_chars,
            "abbreviations": seg.abbreviations,
            "phrases": method,
        });

        let docs: Vec<&Doc> = std::iter::once(&self.source).chain(&self.targets).collect();
        let jobs: Vec<(usize, usize)> =
            (0..docs.len()).flat_map(|d| (0..seg.granularities.len()).map(move |g| (d, g))).collect();
        let cache = StageCache::new(&self.cache_root, "segment");
        let results: Vec<(String, Arc<Segmented>, bool)> = jobs
            .par_iter()
            .map(|&(d, g)| -> Result<_, String> {
                let doc = docs[d];
                let granularity = seg.granularities[g];
                let bytes = std::fs::read(&doc.input.path).map_err(io_msg(&doc.input.path))?;
                let mut cfg = SegmenterConfig::for_language(&doc.lang).with_min_segment_chars(seg.min_segment_chars);
                cfg.abbreviations.extend(seg.abbreviations.iter().map(|a| a.to_lowercase()));
                let key = cache_key(
                    "segment",
                    &json!({
                        "v": CACHE_VERSION,
                        "content": content_hash(&bytes),
                        "tei": doc.input.is_tei(),
                        "doc_id": doc.doc_id,
                        "lang": doc.lang,
                        "granularity": granularity,
                        "config": cfg,
                        "phrases": if granularity == Granularity::Phrase { method.clone() } else { Value::Null },
                    }),
                );
                if let Some(hit) = cache.get::<Segmented>(&key) {
                    return Ok((key, Arc::new(hit), true));
                }
                let path = doc.input.path.display().to_string();
                let lang = (!doc.lang.is_empty()).then_some(doc.lang.as_str());
                let (document, fallbacks) = if doc.input.is_tei() {
                    segment_tei(&bytes, &path, &doc.doc_id, lang, granularity, &cfg, &phrases)
                } else {
                    let text = String::from_utf8(bytes).map_err(|_| format!("{path}: not valid UTF-8"))?;
                    let chapters = input::parse_plain(&text, &path).map_err(|e| e.to_string())?;
                    segment_plain(&doc.doc_id, lang.unwrap_or("und"), &chapters, granularity, &cfg, &phrases)
                }
                .map_err(|e| e.to_string())?;
                let value = Segmented { doc: document, fallbacks };
                cache.put(&key, &value).map_err(io_msg(cache.dir()))?;
                Ok((key, Arc::new(value), false))
            })
            .collect::<Result<_, _>>()?;

        let n_gran = seg.granularities.len();
        let mut results = results.into_iter();
        for d in 0..docs.len() {
            let levels: Vec<_> = results.by_ref().take(n_gran).collect();
            let doc = if d == 0 { &mut self.source } else { &mut self.targets[d - 1] };
            for (g, (key, value, hit)) in levels.into_iter().enumerate() {
                if hit {
                    entry.cache_hits += 1;
                } else {
                    entry.cache_misses += 1;
                }
                let granularity = self.cfg.segmentation.granularities[g];
                entry.keys.insert(format!("{}/{granularity}", doc.key), key.clone());
                schema::write_file(
                    &self.cfg.output.join("segments").join(&doc.key).join(format!("{granularity}.json")),
                    "document",
                    &value.doc,
                )
                .map_err(|e| e.to_string())?;
                doc.levels.push((key, value));
            }
            entry.inputs.push(doc.input.path.display().to_string());
        }
        self.units = self.pair_chapters()?;
        let counts: BTreeMap<String, Value> = std::iter::once(&self.source)
            .chain(&self.targets)
            .map(|d| {
                let per: BTreeMap<String, usize> = d
                    .levels
                    .iter()
                    .zip(self.granularities())
                    .map(|((_, s), g)| (g.to_string(), s.doc.chapters.iter().map(|c| c.segments.len()).sum()))
                    .collect();
                (d.key.clone(), json!({"chapters": d.levels[0].1.doc.chapters.len(), "segments": per}))
            })
            .collect();
        entry.summary = json!({"documents": counts, "aligned_chapters": self.units.len(), "fallbacks": self.fallbacks().len()});
        Ok(())
    }

    /// Pairs source and translation chapters by key. Chapters present on one side only are skipped.
    fn pair_chapters(&self) -> Result<Vec<Unit>, String> {
        let mut units = Vec::new();
        for (t, target) in self.targets.iter().enumerate() {
            for g in 0..self.granularities().len() {
                let src = &self.source.levels[g].1.doc;
                let tgt = &target.levels[g].1.doc;
                for (src_ch, chapter) in src.chapters.iter().enumerate() {
                    match tgt.chapters.iter().position(|c| c.key == chapter.key) {
                        Some(tgt_ch) => units.push(Unit { t, g, src_ch, tgt_ch }),
                        None if g == 0 => log::warn!("chapter {} has no counterpart in {}", chapter.key, target.key),
                        None => {}
                    }
                }
                if g == 0 {
                    for c in &tgt.chapters {
                        if src.chapter(&c.key).is_none() {
                            log::warn!("chapter {} of {} has no source counterpart", c.key, target.key);
                        }
                    }
                }
            }
        }
        if units.is_empty() {
            return Err("no chapter key is shared by the source and any translation".into());
        }
        Ok(units)
    }

    fn provider(&self) -> Result<Arc<dyn EmbeddingProvider<f64>>, String> {
        let e = &self.cfg.embedding;
        Ok(match e.provider {
            ProviderKind::Mock => Arc::new(MockProvider),
            ProviderKind::File => {
                let (v, t) = (e.vectors.as_ref().expect("validated"), e.texts.as_ref().expect("validated"));
                Arc::new(FileProvider::open(v, t).map_err(|err| format!("{}: {err}", v.display()))?)
            }
            ProviderKind::Http => {
                let url = e.url.clone().expect("validated");
                let id = e.id.clone().unwrap_or_else(|| "remote".into());
                Arc::new(HttpProvider::new(&id, url, e.dim.expect("validated"), e.batch).with_attempts(e.attempts))
            }
        })
    }

    fn embed(&mut self, entry: &mut StageReport) -> Result<(), String> {
        let embedder = Arc::new(BlockEmbedder::new(self.provider()?));
        let file_name: String = embedder
            .provider_id()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let store = self.cache_root.join("embed").join(format!("{file_name}.vectors.json"));
        if store.is_file() {
            embedder.load(&store).map_err(|e| format!("{}: {e}", store.display()))?;
        }
        let before = embedder.cached_len();
        let p = &self.cfg.alignment;
        entry.params = json!({"provider": embedder.provider_id(), "dimension": embedder.dimension(), "S": p.max_src, "T": p.max_tgt, "batch": self.cfg.embedding.batch});
        let cache = StageCache::new(&self.cache_root, "embed");
        let mut blocks_total = 0;
        let mut result = Ok(());
        for u in self.units.clone() {
            let blocks: Vec<String> = blocks_of(&self.src_chapter(&u).segments, p.max_src)
                .chain(blocks_of(&self.tgt_chapter(&u).segments, p.max_tgt))
                .collect();
            blocks_total += blocks.len();
            let key = cache_key(
                "embed",
                &json!({
                    "v": CACHE_VERSION,
                    "provider": embedder.provider_id(),
                    "dim": embedder.dimension(),
                    "src": self.source.levels[u.g].0,
                    "tgt": self.targets[u.t].levels[u.g].0,
                    "chapter": self.src_chapter(&u).key,
                    "S": p.max_src,
                    "T": p.max_tgt,
                }),
            );
            entry.keys.insert(self.unit_name(&u), key.clone());
            if cache.get::<usize>(&key).is_some() && blocks.iter().all(|b| embedder.contains(b)) {
                entry.cache_hits += 1;
                continue;
            }
            entry.cache_misses += 1;
            if let Err(e) = embedder.prefetch(&blocks, self.cfg.embedding.batch) {
                result = Err(format!("{}: {e}", self.unit_name(&u)));
                break;
            }
            if let Err(e) = cache.put(&key, &blocks.len()) {
                result = Err(format!("{}: {e}", cache.dir().display()));
                break;
            }
        }
        // Whatever was embedded is kept, so a failed run resumes from here.
        if embedder.cached_len() != before {
            embedder.save(&store).map_err(|e| format!("{}: {e}", store.display()))?;
        }
        entry.summary = json!({"blocks": blocks_total, "newly_embedded": embedder.cached_len() - before, "cached_vectors": embedder.cached_len()});
        result?;
        self.embedder = Some(embedder);
        Ok(())
    }

    fn align(&mut self, entry: &mut StageReport) -> Result<(), String> {
        let embedder = self.embedder.clone().expect("embed stage ran");
        let params = &self.cfg.alignment;
        entry.params = serde_json::to_value(params).expect("params serialise");
        let cache = StageCache::new(&self.cache_root, "align");
        let this = &*self;
        let results: Vec<(String, Arc<AlignmentResult>, bool)> = self
            .units
            .par_iter()
            .map(|u| -> Result<_, String> {
                let key = cache_key(
                    "align",
                    &json!({
                        "v": CACHE_VERSION,
                        "src": this.source.levels[u.g].0,
                        "tgt": this.targets[u.t].levels[u.g].0,
                        "chapter": this.src_chapter(u).key,
                        "provider": embedder.provider_id(),
                        "params": params,
                    }),
                );
                if let Some(hit) = cache.get::<AlignmentResult>(&key) {
                    return Ok((key, Arc::new(hit), true));
                }
                let result = align(&this.src_chapter(u).segments, &this.tgt_chapter(u).segments, embedder.as_ref(), params)
                    .map_err(|e| format!("{}: {e}", this.unit_name(u)))?;
                cache.put(&key, &result).map_err(io_msg(cache.dir()))?;
                Ok((key, Arc::new(result), false))
            })
            .collect::<Result<_, _>>()?;
        let (mut beads, mut gaps) = (0, 0);
        for (u, (key, result, hit)) in self.units.iter().zip(&results) {
            count(entry, *hit);
            entry.keys.insert(self.unit_name(u), key.clone());
            beads += result.beads.len();
            gaps += result.gap_count();
            let path = self.unit_path("alignments", u);
            schema::write_file(&path, "alignment", result.as_ref()).map_err(|e| e.to_string())?;
        }
        entry.summary = json!({"chapters": results.len(), "beads": beads, "gaps": gaps});
        self.alignments = results.into_iter().map(|(k, r, _)| (k, r)).collect();
        Ok(())
    }

    fn unit_path(&self, dir: &str, u: &Unit) -> PathBuf {
        self.out(dir)
            .join(&self.targets[u.t].key)
            .join(self.granularities()[u.g].as_str())
            .join(format!("{}.json", self.src_chapter(u).key))
    }

    /// Units of translation `t` at granularity `g`, as positions into `self.units`.
    fn group(&self, t: usize, g: usize) -> Vec<usize> {
        (0..self.units.len()).filter(|&k| self.units[k].t == t && self.units[k].g == g).collect()
    }

    fn metrics(&mut self, entry: &mut StageReport) -> Result<(), String> {
        let threshold = self.cfg.metrics.length_threshold;
        entry.params = json!({"length_threshold": threshold});
        let cache = StageCache::new(&self.cache_root, "metrics");
        let mut summary = BTreeMap::new();
        for t in 0..self.targets.len() {
            let mut books = Vec::new();
            for g in 0..self.granularities().len() {
                let group = self.group(t, g);
                let granularity = self.granularities()[g];
                let name = format!("{}/{granularity}", self.targets[t].key);
                let (book, src, tgt) = self.concatenate(&group);
                let key = cache_key(
                    "metrics",
                    &json!({
                        "v": CACHE_VERSION,
                        "alignments": group.iter().map(|&k| &self.alignments[k].0).collect::<Vec<_>>(),
                        "threshold": threshold,
                    }),
                );
                entry.keys.insert(name.clone(), key.clone());
                let file = match cache.get::<MetricsFile>(&key) {
                    Some(hit) => {
                        count(entry, true);
                        hit
                    }
                    None => {
                        count(entry, false);
                        let mut chapters = Vec::new();
                        for &k in &group {
                            let u = &self.units[k];
                            let report = compute_metrics(
                                &self.alignments[k].1,
                                &self.src_chapter(u).segments,
                                &self.tgt_chapter(u).segments,
                                threshold,
                            )
                            .map_err(|e| format!("{}: {e}", self.unit_name(u)))?;
                            chapters.push(ChapterMetrics { chapter: self.src_chapter(u).key.clone(), report });
                        }
                        let book_report = compute_metrics(&book, &src, &tgt, threshold).map_err(|e| format!("{name}: {e}"))?;
                        let file = MetricsFile {
                            translation: self.targets[t].key.clone(),
                            granularity,
                            book: book_report,
                            chapters,
                        };
                        cache.put(&key, &file).map_err(io_msg(cache.dir()))?;
                        file
                    }
                };
                summary.insert(
                    name,
                    json!({
                        "pair_count": file.book.pair_count,
                        "gap_count": file.book.gap_count,
                        "pair_count_ratio": file.book.pair_count_ratio,
                        "p95_pair_length": file.book.pair_lengths.p95,
                        "max_pair_length": file.book.pair_lengths.max,
                        "overlong": file.book.overlong_beads.len(),
                    }),
                );
                let path = self.out("metrics").join(&self.targets[t].key).join(format!("{granularity}.json"));
                schema::write_file(&path, "metrics", &file).map_err(|e| e.to_string())?;
                books.push((granularity, book, src, tgt));
            }
            let sentence = books.iter().find(|b| b.0 == Granularity::Sentence);
            let phrase = books.iter().find(|b| b.0 == Granularity::Phrase);
            if let (Some(s), Some(p)) = (sentence, phrase) {
                let cmp = compare_granularities((&s.1, &s.2, &s.3), (&p.1, &p.2, &p.3), threshold)
                    .map_err(|e| format!("{}: {e}", self.targets[t].key))?;
                let path = self.out("metrics").join(&self.targets[t].key).join("comparison.json");
                schema::write_file(&path, "granularity-comparison", &cmp).map_err(|e| e.to_string())?;
                summary.insert(
                    format!("{}/comparison", self.targets[t].key),
                    json!({
                        "delta_pair_count": cmp.delta_pair_count,
                        "delta_p95_pair_length": cmp.delta_p95_pair_length,
                        "delta_max_pair_length": cmp.delta_max_pair_length,
                        "delta_overlong": cmp.delta_overlong,
                    }),
                );
            }
        }
        entry.summary = serde_json::to_value(summary).expect("summary serialises");
        Ok(())
    }

    /// All chapters of a group as one alignment over concatenated segment lists.
    fn concatenate(&self, group: &[usize]) -> (AlignmentResult, Vec<Segment>, Vec<Segment>) {
        let first = &self.alignments[group[0]].1;
        let mut book = AlignmentResult { beads: Vec::new(), ..(**first).clone() };
        let (mut src, mut tgt) = (Vec::new(), Vec::new());
        for &k in group {
            let u = &self.units[k];
            let (so, to) = (src.len(), tgt.len());
            src.extend(self.src_chapter(u).segments.iter().cloned());
            tgt.extend(self.tgt_chapter(u).segments.iter().cloned());
            book.beads.extend(self.alignments[k].1.beads.iter().map(|b| Bead {
                src: b.src.iter().map(|i| i + so).collect(),
                tgt: b.tgt.iter().map(|j| j + to).collect(),
                ..b.clone()
            }));
        }
        (book, src, tgt)
    }

    fn analyze(&mut self, entry: &mut StageReport) -> Result<(), String> {
        let embedder = self.embedder.clone().expect("embed stage ran");
        let cfg = &self.cfg.analysis;
        entry.params = serde_json::to_value(cfg).expect("config serialises");
        let cache = StageCache::new(&self.cache_root, "analyze");
        let this = &*self;
        let results: Vec<(String, Arc<AnalysisReport>, bool)> = (0..self.units.len())
            .into_par_iter()
            .map(|k| -> Result<_, String> {
                let u = &this.units[k];
                let key = cache_key(
                    "analyze",
                    &json!({"v": CACHE_VERSION, "alignment": this.alignments[k].0, "provider": embedder.provider_id(), "config": cfg}),
                );
                if let Some(hit) = cache.get::<AnalysisReport>(&key) {
                    return Ok((key, Arc::new(hit), true));
                }
                let report = analyze(
                    &this.alignments[k].1,
                    &this.src_chapter(u).segments,
                    &this.tgt_chapter(u).segments,
                    embedder.as_ref(),
                    cfg,
                )
                .map_err(|e| format!("{}: {e}", this.unit_name(u)))?;
                cache.put(&key, &report).map_err(io_msg(cache.dir()))?;
                Ok((key, Arc::new(report), false))
            })
            .collect::<Result<_, _>>()?;
        let (mut outliers, mut clusters) = (0, 0);
        for (u, (key, report, hit)) in self.units.iter().zip(&results) {
            count(entry, *hit);
            entry.keys.insert(self.unit_name(u), key.clone());
            outliers += report.outliers.len();
            clusters += report.cluster_count;
            schema::write_file(&self.unit_path("analysis", u), "analysis", report.as_ref()).map_err(|e| e.to_string())?;
        }
        entry.summary = json!({"chapters": results.len(), "outliers": outliers, "clusters": clusters});
        self.analyses = results.into_iter().map(|(k, r, _)| (k, r)).collect();
        Ok(())
    }

    fn encode_tei(&mut self, entry: &mut StageReport) -> Result<(), String> {
        entry.params = json!({"encoding": "token-anchored"});
        let cache = StageCache::new(&self.cache_root, "encode-tei");
        let tei_dir = self.out("tei");
        let mut xml_files = Vec::new();

        let src_key = cache_key("encode-tei", &json!({"v": CACHE_VERSION, "source": self.source.levels[0].0}));
        entry.keys.insert(self.source.key.clone(), src_key.clone());
        let source_xml = match cache.get::<String>(&src_key) {
            Some(hit) => {
                count(entry, true);
                hit
            }
            None => {
                count(entry, false);
                let xml = String::from_utf8(encode_source_tei(&self.source.levels[0].1.doc)).expect("encoder writes UTF-8");
                cache.put(&src_key, &xml).map_err(io_msg(cache.dir()))?;
                xml
            }
        };
        let path = tei_dir.join(format!("{}.xml", self.source.key));
        write_atomic(&path, source_xml.as_bytes()).map_err(io_msg(&path))?;

        let mut violations = 0;
        for t in 0..self.targets.len() {
            for g in 0..self.granularities().len() {
                let group = self.group(t, g);
                let target = &self.targets[t];
                let granularity = self.granularities()[g];
                let name = format!("{}/{granularity}", target.key);
                let source = &self.source.levels[g].1.doc;
                let key = cache_key(
                    "encode-tei",
                    &json!({
                        "v": CACHE_VERSION,
                        "source": self.source.levels[g].0,
                        "target": target.levels[g].0,
                        "lang": target.lang,
                        "alignments": group.iter().map(|&k| &self.alignments[k].0).collect::<Vec<_>>(),
                    }),
                );
                entry.keys.insert(name.clone(), key.clone());
                let xml = match cache.get::<String>(&key) {
                    Some(hit) => {
                        count(entry, true);
                        hit
                    }
                    None => {
                        count(entry, false);
                        let chapters: Vec<TranslationChapter> = group
                            .iter()
                            .map(|&k| TranslationChapter {
                                key: &self.src_chapter(&self.units[k]).key,
                                beads: &self.alignments[k].1.beads,
                                target: &self.tgt_chapter(&self.units[k]).segments,
                            })
                            .collect();
                        let lang = if target.lang.is_empty() { "und" } else { target.lang.as_str() };
                        let bytes = encode_translation_tei(source, &target.levels[g].1.doc.doc_id, lang, &chapters)
                            .map_err(|e| format!("{name}: {e}"))?;
                        let problems = validate_links(&bytes, source);
                        if let Some(p) = problems.first() {
                            return Err(format!("{name}: encoded links do not validate: {p}"));
                        }
                        let xml = String::from_utf8(bytes).expect("encoder writes UTF-8");
                        cache.put(&key, &xml).map_err(io_msg(cache.dir()))?;
                        xml
                    }
                };
                violations += validate_links(xml.as_bytes(), source).len();
                let path = tei_dir.join(&target.key).join(format!("{granularity}.xml"));
                write_atomic(&path, xml.as_bytes()).map_err(io_msg(&path))?;
                xml_files.push(path.display().to_string());
            }
        }
        entry.summary = json!({"files": xml_files.len() + 1, "link_violations": violations});
        Ok(())
    }

    fn render(&mut self, entry: &mut StageReport) -> Result<(), String> {
        let viewer = self.cfg.render.viewer_assets.clone();
        let assets_hash = match &viewer {
            Some(dir) => Some(tree_hash(dir).map_err(io_msg(dir))?),
            None => None,
        };
        entry.params = json!({"title": self.cfg.title, "viewer": viewer.is_some()});
        let key = cache_key(
            "render",
            &json!({
                "v": CACHE_VERSION,
                "title": self.cfg.title,
                "assets": assets_hash,
                "translations": self.targets.iter().map(|t| json!({"key": t.key, "lang": t.lang, "label": t.label, "segments": t.levels.iter().map(|l| &l.0).collect::<Vec<_>>()})).collect::<Vec<_>>(),
                "source": self.source.levels.iter().map(|l| &l.0).collect::<Vec<_>>(),
                "granularities": self.granularities(),
                "alignments": self.alignments.iter().map(|a| &a.0).collect::<Vec<_>>(),
                "analyses": self.analyses.iter().map(|a| &a.0).collect::<Vec<_>>(),
            }),
        );
        entry.keys.insert("site".into(), key.clone());
        let site = self.out("site");
        let cache = StageCache::new(&self.cache_root, "render");
        let cached_tree = cache.dir().join(&key);
        if cache.get::<Value>(&key).is_some() && cached_tree.is_dir() {
            count(entry, true);
            copy_tree(&cached_tree, &site).map_err(io_msg(&cached_tree))?;
        } else {
            count(entry, false);
            let views: Vec<TranslationView> = (0..self.targets.len())
                .map(|t| TranslationView {
                    key: &self.targets[t].key,
                    lang: &self.targets[t].lang,
                    label: &self.targets[t].label,
                    granularities: (0..self.granularities().len())
                        .map(|g| GranularityView {
                            granularity: self.granularities()[g],
                            source: &self.source.levels[g].1.doc,
                            chapters: self
                                .group(t, g)
                                .into_iter()
                                .map(|k| ChapterView {
                                    key: &self.src_chapter(&self.units[k]).key,
                                    target: &self.tgt_chapter(&self.units[k]).segments,
                                    result: &self.alignments[k].1,
                                    analysis: self.analyses.get(k).map(|a| a.1.as_ref()),
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect();
            let opts = SiteOptions { title: self.cfg.title.clone(), viewer_assets: viewer };
            let manifest = render_site(&views, &opts, &site).map_err(|e| e.to_string())?;
            let staging = cache.dir().join(format!("{key}.partial"));
            if staging.exists() {
                std::fs::remove_dir_all(&staging).map_err(io_msg(&staging))?;
            }
            copy_tree(&site, &staging).map_err(io_msg(&staging))?;
            if cached_tree.exists() {
                std::fs::remove_dir_all(&cached_tree).map_err(io_msg(&cached_tree))?;
            }
            std::fs::rename(&staging, &cached_tree).map_err(io_msg(&cached_tree))?;
            let pages: usize = manifest.translations.iter().flat_map(|t| &t.granularities).map(|g| g.chapters.len()).sum();
            cache.put(&key, &json!({"pages": pages})).map_err(io_msg(cache.dir()))?;
        }
        let broken = crate::render::check_links(&site).map_err(io_msg(&site))?;
        if let Some(b) = broken.first() {
            return Err(format!("rendered site has a broken link: {b}"));
        }
        let pages = count_files(&site, "html").map_err(io_msg(&site))?;
        entry.summary = json!({"pages": pages, "site": site.display().to_string()});
        Ok(())
    }
}

fn count(entry: &mut StageReport, hit: bool) {
    if hit {
        entry.cache_hits += 1;
    } else {
        entry.cache_misses += 1;
    }
}

/// Every contiguous block of at most `max` segments, as embedded by the aligner.
fn blocks_of(segs: &[Segment], max: usize) -> impl Iterator<Item = String> + '_ {
    (0..segs.len()).flat_map(move |i| {
        (1..=max.min(segs.len() - i)).map(move |s| {
            let texts: Vec<&str> = segs[i..i + s].iter().map(|x| x.text.as_str()).collect();
            BlockEmbedder::<f64>::join(&texts)
        })
    })
}

/// Metrics of one translation at one granularity: the whole book plus every chapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub translation: String,
    pub granularity: Granularity,
    pub book: MetricsReport,
    pub chapters: Vec<ChapterMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterMetrics {
    pub chapter: String,
    #[serde(flatten)]
    pub report: MetricsReport,
}

fn tree_hash(dir: &Path) -> std::io::Result<String> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut material = Vec::new();
    for rel in files {
        let bytes = std::fs::read(dir.join(&rel))?;
        material.push((rel.to_string_lossy().into_owned(), content_hash(&bytes)));
    }
    Ok(cache_key("tree", &material))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("walk stays under root").to_path_buf());
        }
    }
    Ok(())
}

fn count_files(dir: &Path, ext: &str) -> std::io::Result<usize> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    Ok(files.iter().filter(|p| p.extension().is_some_and(|e| e == ext)).count())
}

/// Relative path and content hash of every file under `dir`, sorted; two
/// output trees are byte-identical when their listings are equal.
pub fn tree_listing(dir: &Path) -> std::io::Result<Vec<(String, String)>> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    let mut listing = Vec::new();
    for rel in files {
        let bytes = std::fs::read(dir.join(&rel))?;
        listing.push((rel.to_string_lossy().replace('\\', "/"), content_hash(&bytes)));
    }
    listing.sort();
    Ok(listing)
}
