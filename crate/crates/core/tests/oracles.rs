//! Checks against independent implementations and hand-built expectations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mde_core::alignment::{AlignParams, BlockScorer};
use mde_core::analysis::{
    conditional_affinities, dbscan, squared_distances, trustworthiness, tsne_project, ClusterConfig, ProjectionConfig,
    NOISE,
};
use mde_core::embedding::{embed, mock_embed, BlockEmbedder, EmbeddingProvider, FileProvider, MockProvider};
use mde_core::model::{Granularity, Segment};
use mde_core::pipeline::input::{parse_plain, segment_plain, segment_tei, PhraseMethod};
use mde_core::segmentation::llm::transcript_key;
use mde_core::segmentation::{LlmSegmenter, SegmentationService, SegmenterConfig, ServiceError};

mod common;

use common::{blobs, cosine_distance, dbscan_by_definition, gradient_error};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn chapter_one(granularity: Granularity) -> mde_core::model::Document {
    let text = std::fs::read_to_string(fixture("promessi_sposi_ch1.txt")).unwrap();
    let chapters = parse_plain(&text, "promessi_sposi_ch1.txt").unwrap();
    let cfg = SegmenterConfig::for_language("it");
    segment_plain("manzoni-1840", "it", &chapters, granularity, &cfg, &PhraseMethod::Punctuation).unwrap().0
}

#[test]
fn chapter_one_token_count_matches_a_regex_scanner() {
    let doc = chapter_one(Granularity::Sentence);
    // words are runs of letters and digits; every other visible character stands alone
    let scanner = regex::Regex::new(r"[\p{Alphabetic}\p{N}]+|\S").unwrap();
    let expected = scanner.find_iter(&doc.text).count();
    assert_eq!(doc.tokens.len(), expected);
    assert!(expected > 700, "fixture unexpectedly small: {expected}");
}

#[test]
fn chapter_one_has_nine_sentences() {
    let doc = chapter_one(Granularity::Sentence);
    assert_eq!(doc.chapters.len(), 1);
    assert_eq!(doc.chapters[0].segments.len(), 9);
    assert!(doc.chapters[0].segments[2].text.starts_with("Per una di queste stradicciole"));
    assert!(doc.chapters[0].segments[3].text.starts_with("Diceva tranquillamente"));
}

#[test]
fn tei_sample_tokens_match_the_transcribed_list() {
    let xml = std::fs::read(fixture("ch1_sample.tei.xml")).unwrap();
    let cfg = SegmenterConfig::for_language("it");
    let (doc, _) =
        segment_tei(&xml, "ch1_sample.tei.xml", "sample", None, Granularity::Sentence, &cfg, &PhraseMethod::Punctuation)
            .unwrap();
    let expected: Vec<(String, String)> = std::fs::read_to_string(fixture("ch1_sample.tokens.tsv"))
        .unwrap()
        .lines()
        .map(|l| {
            let (id, text) = l.split_once('\t').unwrap();
            (id.to_string(), text.to_string())
        })
        .collect();
    let got: Vec<(String, String)> = doc.tokens.iter().map(|t| (t.id.clone(), t.text.clone())).collect();
    assert_eq!(got, expected);
    assert_eq!(doc.lang, "it");
    assert_eq!(doc.chapters[0].segments.len(), 2);
}

#[test]
fn vector_file_is_read_bit_for_bit() {
    let bytes = std::fs::read(fixture("vectors5.mdev")).unwrap();
    assert_eq!(&bytes[..6], b"MDEV1\n");
    let header_end = 6 + bytes[6..].iter().position(|&b| b == b'\n').unwrap();
    let header = std::str::from_utf8(&bytes[6..header_end]).unwrap();
    let (n, d) = header.split_once(' ').unwrap();
    let (n, d): (usize, usize) = (n.parse().unwrap(), d.parse().unwrap());
    let raw: Vec<u32> = bytes[header_end + 1..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    assert_eq!(raw.len(), n * d);

    let provider = FileProvider::open(&fixture("vectors5.mdev"), &fixture("vectors5.txt")).unwrap();
    let texts: Vec<String> =
        std::fs::read_to_string(fixture("vectors5.txt")).unwrap().lines().map(str::to_string).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let m = embed::<f32, _>(&provider, &refs).unwrap();
    assert_eq!((m.rows(), m.dim()), (n, d));
    let got: Vec<u32> = m.as_slice().iter().map(|x| x.to_bits()).collect();
    assert_eq!(got, raw);

    // queried out of order, rows still follow the query
    let m = embed::<f32, _>(&provider, &[refs[3], refs[0]]).unwrap();
    assert_eq!(m.row(0).iter().map(|x| x.to_bits()).collect::<Vec<_>>(), raw[3 * d..4 * d]);
}

#[test]
fn block_of_three_embeds_the_hand_joined_string() {
    let doc = chapter_one(Granularity::Phrase);
    let segs = &doc.chapters[0].segments[..3];
    assert_eq!(segs[0].text, "Quel ramo del lago di Como,");
    let embedder = BlockEmbedder::<f64>::new(Arc::new(MockProvider));
    let texts: Vec<&str> = segs.iter().map(|s| s.text.as_str()).collect();
    let block = embedder.embed_block(&texts).unwrap();
    let by_hand = mock_embed::<f64>(
        "Quel ramo del lago di Como, che volge a mezzogiorno, tra due catene non interrotte di monti,",
    );
    assert_eq!(block.as_ref(), by_hand.as_slice(), "{:?}", texts);
}

#[test]
fn transition_scores_match_a_separate_cosine() {
    let doc = chapter_one(Granularity::Phrase);
    let src = &doc.chapters[0].segments[..6];
    let tgt = &doc.chapters[0].segments[2..8];
    let params = AlignParams::default();
    let embedder = BlockEmbedder::<f64>::new(Arc::new(MockProvider));
    let scorer = BlockScorer::build(src, tgt, &embedder, &params).unwrap();
    let join = |segs: &[Segment]| segs.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
    for (i, s, j, t) in [(0, 1, 0, 1), (0, 2, 1, 1), (1, 3, 0, 2), (2, 1, 3, 3)] {
        let a = mock_embed::<f64>(&join(&src[i..i + s]));
        let b = mock_embed::<f64>(&join(&tgt[j..j + t]));
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let norms = a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let expected = dot / norms - params.merge_penalty * (s + t - 2) as f64;
        approx::assert_abs_diff_eq!(scorer.transition_score(i, s, j, t), expected, epsilon = 1e-12);
    }
    approx::assert_abs_diff_eq!(scorer.transition_score(0, 1, 0, 0), params.gap_score, epsilon = 1e-12);
    approx::assert_abs_diff_eq!(scorer.transition_score(0, 0, 0, 1), params.gap_score, epsilon = 1e-12);
}

#[test]
fn dbscan_matches_the_definition_on_random_points() {
    let mut interesting = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (points, _) = blobs(&mut rng, 50, 4, 3, 0.35);
        let dist: Vec<Vec<f64>> = points.iter().map(|a| points.iter().map(|b| cosine_distance(a, b)).collect()).collect();
        for (eps, min_pts) in [(0.02, 2), (0.05, 3), (0.1, 4), (0.3, 2)] {
            let rows: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
            let got = dbscan(&rows, &ClusterConfig { eps, min_pts }).unwrap();
            assert_eq!(got, dbscan_by_definition(&dist, eps, min_pts), "seed {seed} eps {eps} min_pts {min_pts}");
            let clusters = got.iter().copied().max().unwrap_or(NOISE) + 1;
            if clusters >= 2 && got.contains(&NOISE) {
                interesting += 1;
            }
        }
    }
    assert!(interesting >= 10, "fixtures too degenerate: {interesting}");
}

#[test]
fn kl_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let relative = gradient_error(seed, 10);
        assert!(relative < 1e-4, "seed {seed}: relative gradient error {relative:e}");
    }
}

#[test]
fn conditional_affinity_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [5, 10, 40] {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let perplexity = ((n - 1) / 3) as f64;
        let p = conditional_affinities(&squared_distances(&rows), n, perplexity);
        for i in 0..n {
            let sum: f64 = p[i * n..(i + 1) * n].iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6, "n {n} row {i} sums to {sum}");
            assert_eq!(p[i * n + i], 0.0);
        }
    }
}

#[test]
fn projection_is_bit_identical_for_a_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (points, _) = blobs(&mut rng, 30, 3, 6, 0.2);
    let rows: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
    let cfg = ProjectionConfig { seed: 99, iterations: 400, ..Default::default() };
    let a = tsne_project(&rows, &cfg).unwrap();
    let b = tsne_project(&rows, &cfg).unwrap();
    let bits = |v: &[[f64; 2]]| v.iter().flat_map(|p| [p[0].to_bits(), p[1].to_bits()]).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let c = tsne_project(&rows, &ProjectionConfig { seed: 100, ..cfg }).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

/// Trustworthiness computed from brute-force neighbour lists in both spaces.
fn trustworthiness_by_hand(high: &[Vec<f64>], low: &[[f64; 2]], k: usize) -> f64 {
    let n = high.len();
    let euclid = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let ranked = |i: usize, dist: &dyn Fn(usize, usize) -> f64| {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b)));
        others
    };
    let mut penalty = 0.0;
    for i in 0..n {
        let high_rank = ranked(i, &|a, b| euclid(&high[a], &high[b]));
        let low_rank = ranked(i, &|a, b| euclid(&low[a], &low[b]));
        for j in &low_rank[..k] {
            let r = high_rank.iter().position(|x| x == j).unwrap() + 1;
            penalty += r.saturating_sub(k) as f64;
        }
    }
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty
}

#[test]
fn separated_mixture_projects_trustworthily() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (points, _) = blobs(&mut rng, 60, 3, 10, 0.15);
    let rows: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
    let low = tsne_project(&rows, &ProjectionConfig { seed: 1, ..Default::default() }).unwrap();
    let t = trustworthiness(&squared_distances(&points), &low, 5);
    approx::assert_abs_diff_eq!(t, trustworthiness_by_hand(&points, &low, 5), epsilon = 1e-12);
    assert!(t >= 0.8, "trustworthiness {t}");
}

/// Mean silhouette of `labels` over planar points.
fn silhouette(points: &[[f64; 2]], labels: &[usize]) -> f64 {
    let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let groups = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..points.len() {
        let mean_to = |g: usize| {
            let members: Vec<usize> = (0..points.len()).filter(|&j| j != i && labels[j] == g).collect();
            members.iter().map(|&j| d(points[i], points[j])).sum::<f64>() / members.len() as f64
        };
        let a = mean_to(labels[i]);
        let b = (0..groups).filter(|&g| g != labels[i]).map(mean_to).fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / points.len() as f64
}

#[test]
fn two_text_families_separate_in_the_plane() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let stems = ["quel ramo del lago di como che volge a mezzogiorno", "the quick brown fox jumps over a lazy dog"];
    let mut texts = Vec::new();
    let mut labels = Vec::new();
    for i in 0..24 {
        let word: String = (0..5).map(|_| char::from(rng.random_range(b'a'..=b'z'))).collect();
        texts.push(format!("{} {word}", stems[i % 2]));
        labels.push(i % 2);
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let m = embed::<f64, _>(&MockProvider, &refs).unwrap();
    let rows: Vec<&[f64]> = m.iter_rows().collect();
    let low = tsne_project(&rows, &ProjectionConfig { seed: 2, ..Default::default() }).unwrap();
    let s = silhouette(&low, &labels);
    assert!(s > 0.5, "silhouette {s}");
}

struct Unreachable;

impl SegmentationService for Unreachable {
    fn model_id(&self) -> &str {
        "fixture-model"
    }
    fn complete(&self, prompt: &str) -> Result<String, ServiceError> {
        panic!("no transcript recorded for prompt:\n{prompt}");
    }
}

#[test]
fn recorded_transcripts_replay_without_the_service() {
    let sentence = |text: &str| Segment::new("it", 0, text, Granularity::Sentence);
    let segmenter = LlmSegmenter::new(Arc::new(Unreachable)).with_cache_dir(fixture("transcripts"));
    let cfg = SegmenterConfig::for_language("it");

    let s = sentence(
        "Quel ramo del lago di Como, che volge a mezzogiorno, tra due catene non interrotte di monti, \
         vien quasi a un tratto a ristringersi.",
    );
    let out = segmenter.segment(&s, &[], &cfg).unwrap();
    assert!(out.cache_hit && out.fallback.is_none());
    let texts: Vec<&str> = out.segments.iter().map(|s| s.text.as_str()).collect();
    assert_eq!(
        texts,
        [
            "Quel ramo del lago di Como,",
            "che volge a mezzogiorno,",
            "tra due catene non interrotte di monti,",
            "vien quasi a un tratto a ristringersi."
        ]
    );

    let s = sentence(
        "Il ponte, che ivi congiunge le due rive, par che renda ancor più sensibile all'occhio questa trasformazione.",
    );
    let out = segmenter.segment(&s, &[], &cfg).unwrap();
    assert_eq!(out.segments.len(), 2);
    assert_eq!(out.segments[0].text, "Il ponte, che ivi congiunge le due rive,");

    // the recorded answer drops words, so punctuation splitting takes over
    let s = sentence(
        "Per una di queste stradicciole tornava bel bello dalla passeggiata verso casa, \
         sulla sera del giorno 7 novembre, don Abbondio.",
    );
    let out = segmenter.segment(&s, &[], &cfg).unwrap();
    assert!(out.cache_hit);
    assert_eq!(out.fallback.as_deref(), Some("segments do not reproduce the sentence"));
    assert_eq!(mde_core::model::reassemble(&out.segments), s.text);
}

#[test]
fn transcript_files_are_named_by_their_request() {
    for entry in std::fs::read_dir(fixture("transcripts")).unwrap() {
        let path = entry.unwrap().path();
        let t: mde_core::segmentation::llm::Transcript =
            serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        assert_eq!(path.file_stem().unwrap().to_str().unwrap(), transcript_key(&t.model, &t.prompt));
    }
}

#[test]
fn mock_rows_have_unit_norm_and_repeat() {
    let rows = EmbeddingProvider::<f64>::embed_texts(&MockProvider, &["abc", "abc", "Quel ramo del lago"]).unwrap();
    assert_eq!(rows[0], rows[1]);
    for r in rows {
        approx::assert_abs_diff_eq!(r.iter().map(|x| x * x).sum::<f64>().sqrt(), 1.0, epsilon = 1e-6);
    }
}
