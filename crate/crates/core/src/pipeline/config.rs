//! The declarative run configuration, read from one TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::AlignParams;
use crate::analysis::AnalysisConfig;
use crate::model::Granularity;
use crate::segmentation::Strategy;

use super::Stage;

pub const CACHE_ENV: &str = "MDE_CACHE_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentInput {
    /// Plain-text document, or a token-identified TEI file (`.xml`) for the source.
    pub path: PathBuf,
    /// Short name used in output paths; defaults to the file stem.
    pub key: Option<String>,
    /// Falls back to the sidecar metadata, then to the TEI language.
    pub lang: Option<String>,
    pub label: Option<String>,
    pub doc_id: Option<String>,
}

impl DocumentInput {
    pub fn stem(&self) -> String {
        self.path.file_stem().and_then(|s| s.to_str()).unwrap_or("doc").to_string()
    }

    pub fn is_tei(&self) -> bool {
        self.path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub attempts: usize,
    pub backoff_ms: u64,
    /// JSON file of `[sentence, [segment, ...]]` pairs.
    pub exemplars: Option<PathBuf>,
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection { endpoint: None, model: "default".into(), token_env: None, attempts: 3, backoff_ms: 500, exemplars: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationSection {
    /// How phrase-level segments are produced from sentences.
    pub strategy: Strategy,
    pub granularities: Vec<Granularity>,
    pub min_segment_chars: usize,
    /// Added to the built-in abbreviation list of each language.
    pub abbreviations: Vec<String>,
    pub llm: LlmSection,
}

impl Default for SegmentationSection {
    fn default() -> Self {
        SegmentationSection {
            strategy: Strategy::Punctuation,
            granularities: vec![Granularity::Sentence, Granularity::Phrase],
            min_segment_chars: 15,
            abbreviations: Vec::new(),
            llm: LlmSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    File,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub provider: ProviderKind,
    /// `file`: MDEV1 vectors and the matching one-text-per-line list.
    pub vectors: Option<PathBuf>,
    pub texts: Option<PathBuf>,
    /// `http`: endpoint, model id and vector dimension.
    pub url: Option<String>,
    pub id: Option<String>,
    pub dim: Option<usize>,
    pub batch: usize,
    pub attempts: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            provider: ProviderKind::Mock,
            vectors: None,
            texts: None,
            url: None,
            id: None,
            dim: None,
            batch: 64,
            attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub length_threshold: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection { length_threshold: 60 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    /// Directory copied into `site/assets/`; its presence adds the viewer script.
    pub viewer_assets: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_title")]
    pub title: String,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub source: DocumentInput,
    pub translations: Vec<DocumentInput>,
    #[serde(default)]
    pub segmentation: SegmentationSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub alignment: AlignParams,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub render: RenderSection,
    /// Aborts the run when this stage starts, as if it had failed.
    pub fail_at_stage: Option<Stage>,
}

fn default_title() -> String {
    "Multilingual Digital Edition".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_workers() -> usize {
    4
}

impl PipelineConfig {
    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output);
        if let Some(c) = self.cache_dir.as_mut() {
            fix(c);
        }
        fix(&mut self.source.path);
        for t in &mut self.translations {
            fix(&mut t.path);
        }
        for p in [&mut self.embedding.vectors, &mut self.embedding.texts, &mut self.segmentation.llm.exemplars, &mut self.render.viewer_assets]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Cache location: the environment variable wins over the file key,
    /// which wins over a `<output>.cache` directory beside the output.
    pub fn cache_root(&self) -> PathBuf {
        if let Some(dir) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(dir);
        }
        self.cache_dir.clone().unwrap_or_else(|| {
            let name = format!("{}.cache", self.output.file_name().and_then(|n| n.to_str()).unwrap_or("out"));
            self.output.with_file_name(name)
        })
    }

    pub fn source_key(&self) -> String {
        self.source.key.clone().unwrap_or_else(|| self.source.stem())
    }

    pub fn translation_keys(&self) -> Vec<String> {
        self.translations.iter().map(|t| t.key.clone().unwrap_or_else(|| t.stem())).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.translations.is_empty() {
            return bad("at least one translation is required".into());
        }
        let keys = self.translation_keys();
        for (i, k) in keys.iter().enumerate() {
            if k.is_empty() || k.starts_with('.') || k.contains(['/', '\\']) || k == "data" || k == "assets" {
                return bad(format!("translation key `{k}` cannot be used as a directory name"));
            }
            if keys[..i].contains(k) {
                return bad(format!("translation key `{k}` appears twice"));
            }
        }
        for t in &self.translations {
            if t.is_tei() {
                return bad(format!("{}: translations must be plain-text documents", t.path.display()));
            }
        }
        let g = &self.segmentation.granularities;
        if g.is_empty() {
            return bad("segmentation.granularities is empty".into());
        }
        if g.iter().enumerate().any(|(i, x)| g[..i].contains(x)) {
            return bad("segmentation.granularities lists a granularity twice".into());
        }
        if g.contains(&Granularity::Phrase) && self.segmentation.strategy == Strategy::Sentence {
            return bad("phrase granularity needs strategy `punctuation` or `llm`".into());
        }
        if self.segmentation.min_segment_chars == 0 {
            return bad("segmentation.min_segment_chars must be at least 1".into());
        }
        if self.segmentation.strategy == Strategy::Llm && self.segmentation.llm.endpoint.is_none() {
            return bad("strategy `llm` needs segmentation.llm.endpoint".into());
        }
        let e = &self.embedding;
        match e.provider {
            ProviderKind::Mock => {}
            ProviderKind::File if e.vectors.is_none() || e.texts.is_none() => {
                return bad("provider `file` needs embedding.vectors and embedding.texts".into())
            }
            ProviderKind::Http if e.url.is_none() || e.dim.is_none() => {
                return bad("provider `http` needs embedding.url and embedding.dim".into())
            }
            _ => {}
        }
        if e.batch == 0 {
            return bad("embedding.batch must be at least 1".into());
        }
        self.alignment.validate().map_err(|err| ConfigError::Invalid(err.to_string()))?;
        if self.metrics.length_threshold == 0 {
            return bad("metrics.length_threshold must be at least 1".into());
        }
        if self.analysis.projection.iterations < 250 {
            return bad(format!("analysis.projection.iterations must be at least 250, got {}", self.analysis.projection.iterations));
        }
        if !(self.analysis.cluster.eps > 0.0) || self.analysis.cluster.min_pts == 0 {
            return bad("analysis.cluster needs eps > 0 and min_pts >= 1".into());
        }
        Ok(())
    }
}
