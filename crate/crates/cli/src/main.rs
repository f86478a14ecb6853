//! `mde`: command-line driver for the edition pipeline.
//!
//! With `--config`, a stage subcommand runs the configured pipeline up to
//! and including that stage. Without it, the subcommand works on files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mde_core::alignment::{align, AlignParams};
use mde_core::analysis::{analyze, AnalysisConfig};
use mde_core::embedding::{mdev, BlockEmbedder, EmbeddingProvider, FileProvider, HttpProvider, MockProvider};
use mde_core::metrics::{compute_metrics, omission_recall, score_against_gold, MatchMode};
use mde_core::model::{AlignmentResult, Document, Granularity, Segment};
use mde_core::pipeline::input::{parse_plain, read_meta, segment_plain, segment_tei, PhraseMethod};
use mde_core::pipeline::project::SyntheticProject;
use mde_core::pipeline::{run_through, ConfigError, PipelineConfig, PipelineError, Stage};
use mde_core::schema;
use mde_core::segmentation::{SegmenterConfig, Strategy};
use mde_core::synthetic::{generate, recovery_score, NoiseProfile};
use mde_core::tei::{encode_source_tei, encode_translation_tei, validate_links, TranslationChapter};

#[derive(Parser)]
#[command(name = "mde", version, about = "Build aligned multilingual digital editions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage of the configured pipeline.
    Run(PipelineArgs),
    /// Segment a document into sentences or phrases.
    Segment(SegmentArgs),
    /// Embed every segment of a document into an MDEV1 vector file.
    Embed(EmbedArgs),
    /// Align one chapter of a source and a target document.
    Align(AlignArgs),
    /// Length and bead-type statistics of an alignment.
    Metrics(MetricsArgs),
    /// Projection, clustering and outliers of an alignment.
    Analyze(AnalyzeArgs),
    /// Write token-anchored TEI for a source or an aligned translation.
    EncodeTei(EncodeTeiArgs),
    /// Render the configured edition as a static site.
    Render(PipelineArgs),
    /// Synthetic corpora with gold alignments.
    Synth {
        #[command(subcommand)]
        command: SynthCommand,
    },
    /// Score a predicted alignment against gold.
    Eval(EvalArgs),
}

#[derive(Args, Clone, Default)]
struct PipelineArgs {
    /// Pipeline configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Alignment parameters, e.g. `S=3,T=3,lambda=0.15,sigma=0.10`; overrides `[alignment]`.
    #[arg(long)]
    params: Option<AlignParams>,
    /// Worker threads; overrides `workers`.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Plain-text document, or token-identified TEI (`.xml`).
    #[arg(long, conflicts_with = "config")]
    input: Option<PathBuf>,
    #[arg(long)]
    doc_id: Option<String>,
    #[arg(long)]
    lang: Option<String>,
    #[arg(long, default_value = "sentence")]
    granularity: Granularity,
    #[arg(long, default_value_t = 15)]
    min_segment_chars: usize,
    /// Document file to write; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Mock,
    File,
    Http,
}

#[derive(Args)]
struct ProviderArgs {
    #[arg(long, value_enum, default_value = "mock")]
    provider: ProviderArg,
    /// `file`: MDEV1 vectors.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// `file`: one text per line, matching the vectors.
    #[arg(long)]
    texts: Option<PathBuf>,
    /// `http`: endpoint URL.
    #[arg(long)]
    url: Option<String>,
    /// `http`: provider id.
    #[arg(long, default_value = "remote")]
    provider_id: String,
    /// `http`: vector dimension.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value_t = 64)]
    batch: usize,
}

impl ProviderArgs {
    fn build(&self) -> Result<Arc<dyn EmbeddingProvider<f64>>> {
        Ok(match self.provider {
            ProviderArg::Mock => Arc::new(MockProvider),
            ProviderArg::File => {
                let v = self.vectors.as_ref().ok_or_else(|| usage("--provider file needs --vectors"))?;
                let t = self.texts.as_ref().ok_or_else(|| usage("--provider file needs --texts"))?;
                Arc::new(FileProvider::open(v, t).with_context(|| v.display().to_string())?)
            }
            ProviderArg::Http => {
                let url = self.url.clone().ok_or_else(|| usage("--provider http needs --url"))?;
                let dim = self.dim.ok_or_else(|| usage("--provider http needs --dim"))?;
                Arc::new(HttpProvider::new(&self.provider_id, url, dim, self.batch))
            }
        })
    }
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Document file written by `mde segment`.
    #[arg(long, conflicts_with = "config")]
    document: Option<PathBuf>,
    #[command(flatten)]
    provider: ProviderArgs,
    /// MDEV1 output; the segment texts go to the same path with `.txt` appended.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PairArgs {
    /// Source document file.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Target document file.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Chapter key; may be omitted when both documents have one chapter.
    #[arg(long)]
    chapter: Option<String>,
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    pair: PairArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, conflicts_with = "config")]
    alignment: Option<PathBuf>,
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, default_value_t = 60)]
    length_threshold: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, conflicts_with = "config")]
    alignment: Option<PathBuf>,
    #[command(flatten)]
    pair: PairArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeTeiArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Source document file.
    #[arg(long, conflicts_with = "config")]
    source: Option<PathBuf>,
    /// Target document file; without it the source itself is encoded.
    #[arg(long, requires = "source")]
    target: Option<PathBuf>,
    /// `CHAPTER=FILE` alignment of one chapter; repeat for more chapters.
    #[arg(long = "alignment", requires = "target")]
    alignments: Vec<String>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Write a synthetic book, pseudo-translations, gold alignments and a config.
    Book {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        chapters: usize,
        #[arg(long, default_value_t = 40)]
        sentences: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Derive a noisy target and its gold alignment from one document chapter.
    Generate {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        chapter: Option<String>,
        #[command(flatten)]
        profile: ProfileArgs,
        #[arg(long, default_value = "synthetic")]
        target_id: String,
        /// Target document file.
        #[arg(long)]
        target_out: PathBuf,
        /// Gold alignment file.
        #[arg(long)]
        gold_out: PathBuf,
    },
    /// Mean and minimum strict F1 of the aligner on generated targets.
    Recovery {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        chapter: Option<String>,
        #[command(flatten)]
        profile: ProfileArgs,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        params: Option<AlignParams>,
    },
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long, default_value_t = 0.0)]
    merge_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    split_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    omit_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    insert_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    reorder_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    char_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ProfileArgs {
    fn profile(&self) -> NoiseProfile {
        NoiseProfile {
            merge_rate: self.merge_rate,
            split_rate: self.split_rate,
            omit_rate: self.omit_rate,
            insert_rate: self.insert_rate,
            reorder_rate: self.reorder_rate,
            char_noise: self.char_noise,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Strict,
    Lax,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predicted: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_enum, default_value = "strict")]
    mode: ModeArg,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// An error that maps to exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: &str) -> anyhow::Error {
    UsageError(msg.to_string()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            let is_usage = e.downcast_ref::<UsageError>().is_some()
                || e.downcast_ref::<ConfigError>().is_some()
                || matches!(e.downcast_ref::<PipelineError>(), Some(PipelineError::Config(_)));
            ExitCode::from(if is_usage { 2 } else { 1 })
        }
    }
}

/// The error chain, skipping causes whose text the outer message already includes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(p) => pipeline(&p, Stage::Render),
        Command::Render(p) => pipeline(&p, Stage::Render),
        Command::Segment(a) if a.pipeline.config.is_some() => pipeline(&a.pipeline, Stage::Segment),
        Command::Segment(a) => segment(a),
        Command::Embed(a) if a.pipeline.config.is_some() => pipeline(&a.pipeline, Stage::Embed),
        Command::Embed(a) => embed(a),
        Command::Align(a) if a.pipeline.config.is_some() => pipeline(&a.pipeline, Stage::Align),
        Command::Align(a) => align_files(a),
        Command::Metrics(a) if a.pipeline.config.is_some() => pipeline(&a.pipeline, Stage::Metrics),
        Command::Metrics(a) => metrics(a),
        Command::Analyze(a) if a.pipeline.config.is_some() => pipeline(&a.pipeline, Stage::Analyze),
        Command::Analyze(a) => analyze_files(a),
        Command::EncodeTei(a) if a.pipeline.config.is_some() => pipeline(&a.pipeline, Stage::EncodeTei),
        Command::EncodeTei(a) => encode_tei(a),
        Command::Synth { command } => synth(command),
        Command::Eval(a) => eval(a),
    }
}

fn pipeline(args: &PipelineArgs, last: Stage) -> Result<()> {
    let path = args.config.as_ref().ok_or_else(|| usage("--config is required for this command"))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    if let Some(p) = &args.params {
        cfg.alignment = p.clone();
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    let report = run_through(&cfg, last)?;
    for s in report.stages.iter().filter(|s| s.stage <= last) {
        eprintln!("{:<10} {:>4} cached {:>4} computed {:>7} ms", s.stage.name(), s.cache_hits, s.cache_misses, s.duration_ms);
    }
    println!("{}", cfg.output.join(mde_core::pipeline::REPORT_FILE).display());
    Ok(())
}

fn write_output(output: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match output {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
            }
            std::fs::write(path, bytes).with_context(|| path.display().to_string())
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).context("writing to standard output")
        }
    }
}

fn read_document(path: &Path) -> Result<Document> {
    Ok(schema::read_file(path, "document")?)
}

fn read_alignment(path: &Path) -> Result<AlignmentResult> {
    Ok(schema::read_file(path, "alignment")?)
}

fn chapter<'a>(doc: &'a Document, key: Option<&str>) -> Result<&'a [Segment]> {
    let chapter = match key {
        Some(k) => doc.chapter(k).ok_or_else(|| anyhow!("{} has no chapter `{k}`", doc.doc_id))?,
        None if doc.chapters.len() == 1 => &doc.chapters[0],
        None => return Err(usage(&format!("{} has {} chapters; pass --chapter", doc.doc_id, doc.chapters.len()))),
    };
    Ok(&chapter.segments)
}

fn pair(p: &PairArgs) -> Result<(Document, Document)> {
    let src = p.source.as_ref().ok_or_else(|| usage("--source is required without --config"))?;
    let tgt = p.target.as_ref().ok_or_else(|| usage("--target is required without --config"))?;
    Ok((read_document(src)?, read_document(tgt)?))
}

fn segment(a: SegmentArgs) -> Result<()> {
    let input = a.input.as_ref().ok_or_else(|| usage("--input or --config is required"))?;
    let meta = read_meta(input)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("doc").to_string();
    let doc_id = a.doc_id.or(meta.doc_id).unwrap_or(stem);
    let lang = a.lang.or(meta.lang);
    let cfg = SegmenterConfig::for_language(lang.as_deref().unwrap_or(""))
        .with_strategy(if a.granularity == Granularity::Phrase { Strategy::Punctuation } else { Strategy::Sentence })
        .with_min_segment_chars(a.min_segment_chars);
    let bytes = std::fs::read(input).with_context(|| input.display().to_string())?;
    let path = input.display().to_string();
    let (doc, _) = if input.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")) {
        segment_tei(&bytes, &path, &doc_id, lang.as_deref(), a.granularity, &cfg, &PhraseMethod::Punctuation)?
    } else {
        let text = String::from_utf8(bytes).map_err(|_| anyhow!("{path}: not valid UTF-8"))?;
        let chapters = parse_plain(&text, &path)?;
        segment_plain(&doc_id, lang.as_deref().unwrap_or("und"), &chapters, a.granularity, &cfg, &PhraseMethod::Punctuation)?
    };
    write_output(a.output.as_deref(), &schema::to_bytes("document", &doc))
}

fn embed(a: EmbedArgs) -> Result<()> {
    let path = a.document.as_ref().ok_or_else(|| usage("--document or --config is required"))?;
    let output = a.output.as_ref().ok_or_else(|| usage("--output is required"))?;
    let doc = read_document(path)?;
    let provider = a.provider.build()?;
    let texts: Vec<&str> = doc.chapters.iter().flat_map(|c| &c.segments).map(|s| s.text.as_str()).collect();
    let mut values = Vec::new();
    for chunk in texts.chunks(a.provider.batch.max(1)) {
        for row in provider.embed_texts(chunk)? {
            values.extend(row.into_iter().map(|x| x as f32));
        }
    }
    write_output(Some(output), &mdev::encode(texts.len(), provider.dimension(), &values))?;
    let mut list = texts.join("\n");
    list.push('\n');
    let mut text_path = output.as_os_str().to_owned();
    text_path.push(".txt");
    write_output(Some(Path::new(&text_path)), list.as_bytes())
}

fn embedder(p: &ProviderArgs) -> Result<BlockEmbedder<f64>> {
    Ok(BlockEmbedder::new(p.build()?))
}

fn align_files(a: AlignArgs) -> Result<()> {
    let (src, tgt) = pair(&a.pair)?;
    let params = a.pipeline.params.clone().unwrap_or_default();
    params.validate().map_err(|e| usage(&e.to_string()))?;
    let result = align(chapter(&src, a.pair.chapter.as_deref())?, chapter(&tgt, a.pair.chapter.as_deref())?, &embedder(&a.provider)?, &params)?;
    write_output(a.output.as_deref(), &schema::to_bytes("alignment", &result))
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let path = a.alignment.as_ref().ok_or_else(|| usage("--alignment or --config is required"))?;
    let result = read_alignment(path)?;
    let (src, tgt) = pair(&a.pair)?;
    let key = a.pair.chapter.as_deref();
    let report = compute_metrics(&result, chapter(&src, key)?, chapter(&tgt, key)?, a.length_threshold)?;
    write_output(a.output.as_deref(), &schema::to_bytes("metrics-report", &report))
}

fn analyze_files(a: AnalyzeArgs) -> Result<()> {
    let path = a.alignment.as_ref().ok_or_else(|| usage("--alignment or --config is required"))?;
    let result = read_alignment(path)?;
    let (src, tgt) = pair(&a.pair)?;
    let key = a.pair.chapter.as_deref();
    let mut cfg = AnalysisConfig::default();
    cfg.projection.seed = a.seed;
    let report = analyze(&result, chapter(&src, key)?, chapter(&tgt, key)?, &embedder(&a.provider)?, &cfg)?;
    write_output(a.output.as_deref(), &schema::to_bytes("analysis", &report))
}

fn encode_tei(a: EncodeTeiArgs) -> Result<()> {
    let src_path = a.source.as_ref().ok_or_else(|| usage("--source or --config is required"))?;
    let source = read_document(src_path)?;
    let Some(tgt_path) = &a.target else {
        return write_output(a.output.as_deref(), &encode_source_tei(&source));
    };
    let target = read_document(tgt_path)?;
    if a.alignments.is_empty() {
        bail!(usage("--alignment CHAPTER=FILE is required with --target"));
    }
    let mut loaded = Vec::new();
    for spec in &a.alignments {
        let (key, file) = spec.split_once('=').ok_or_else(|| usage(&format!("expected CHAPTER=FILE, got `{spec}`")))?;
        loaded.push((key.to_string(), read_alignment(Path::new(file))?));
    }
    let chapters = loaded
        .iter()
        .map(|(key, result)| {
            Ok(TranslationChapter { key, beads: &result.beads, target: chapter(&target, Some(key))? })
        })
        .collect::<Result<Vec<_>>>()?;
    let xml = encode_translation_tei(&source, &target.doc_id, &target.lang, &chapters)?;
    if let Some(v) = validate_links(&xml, &source).first() {
        bail!("encoded links do not validate: {v}");
    }
    write_output(a.output.as_deref(), &xml)
}

fn synth(command: SynthCommand) -> Result<()> {
    match command {
        SynthCommand::Book { out, chapters, sentences, seed } => {
            if chapters == 0 || sentences == 0 {
                bail!(usage("--chapters and --sentences must be at least 1"));
            }
            let config = SyntheticProject::standard(chapters, sentences, seed).write(&out)?;
            println!("{}", config.display());
            Ok(())
        }
        SynthCommand::Generate { source, chapter: key, profile, target_id, target_out, gold_out } => {
            let doc = read_document(&source)?;
            let profile = profile.profile();
            profile.validate().map_err(|e| usage(&e.to_string()))?;
            let segs = chapter(&doc, key.as_deref())?;
            let synthetic = generate(segs, &profile, &target_id)?;
            let chapter_key = key.unwrap_or_else(|| doc.chapters[0].key.clone());
            let target = target_document(&target_id, &doc.lang, &chapter_key, synthetic.target);
            for f in &synthetic.fallbacks {
                log::info!("{f}");
            }
            write_output(Some(&target_out), &schema::to_bytes("document", &target))?;
            write_output(Some(&gold_out), &schema::to_bytes("alignment", &synthetic.gold))
        }
        SynthCommand::Recovery { source, chapter: key, profile, trials, params } => {
            let doc = read_document(&source)?;
            let profile = profile.profile();
            profile.validate().map_err(|e| usage(&e.to_string()))?;
            let score = recovery_score(chapter(&doc, key.as_deref())?, &profile, &params.unwrap_or_default(), trials)?;
            println!("{}", serde_json::to_string_pretty(&score)?);
            Ok(())
        }
    }
}

/// Wraps generated segments in a one-chapter document with fresh tokens.
fn target_document(doc_id: &str, lang: &str, chapter: &str, segments: Vec<Segment>) -> Document {
    let mut segments = segments;
    mde_core::model::reindex(&mut segments, doc_id);
    let mut doc = Document {
        doc_id: doc_id.to_string(),
        lang: lang.to_string(),
        text: mde_core::model::reassemble(&segments),
        chapters: vec![mde_core::model::Chapter { key: chapter.to_string(), segments }],
        tokens: Vec::new(),
    };
    doc.tokens = mde_core::model::tokenize(&doc.text);
    doc.assign_token_spans();
    doc
}

fn eval(a: EvalArgs) -> Result<()> {
    let predicted = read_alignment(&a.predicted)?;
    let gold = read_alignment(&a.gold)?;
    let mode = match a.mode {
        ModeArg::Strict => MatchMode::Strict,
        ModeArg::Lax => MatchMode::Lax,
    };
    let score = score_against_gold(&predicted, &gold, mode)?;
    let body = serde_json::json!({
        "score": score,
        "omission_recall": omission_recall(&predicted, &gold),
    });
    write_output(a.output.as_deref(), &schema::to_bytes("gold-score", &body))
}
