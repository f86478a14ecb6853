//! Pseudo-translations with known gold alignments.
//!
//! A pseudo-translation copies the source segments, applies at most one
//! structural edit per source segment (merge, split, omit, insert, swap),
//! then substitutes letters at random. Under the trigram mock embedder the
//! copy keeps the similarity structure a multilingual model would show
//! across languages, so every metric can be checked against exact gold.

use std::collections::HashSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{align, AlignError, AlignParams};
use crate::embedding::{BlockEmbedder, MockProvider};
use crate::metrics::{omission_recall, score_against_gold, MatchMode};
use crate::model::{AlignmentResult, Bead, Granularity, Segment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    #[serde(default)]
    pub merge_rate: f64,
    #[serde(default)]
    pub split_rate: f64,
    #[serde(default)]
    pub omit_rate: f64,
    #[serde(default)]
    pub insert_rate: f64,
    #[serde(default)]
    pub reorder_rate: f64,
    #[serde(default)]
    pub char_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        NoiseProfile::clean(0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid noise profile: {0}")]
    InvalidProfile(String),
    #[error("cannot generate from an empty source")]
    EmptySource,
    #[error(transparent)]
    Align(#[from] AlignError),
}

impl NoiseProfile {
    pub fn clean(seed: u64) -> Self {
        NoiseProfile {
            merge_rate: 0.0,
            split_rate: 0.0,
            omit_rate: 0.0,
            insert_rate: 0.0,
            reorder_rate: 0.0,
            char_noise: 0.0,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        NoiseProfile { seed, ..self.clone() }
    }

    fn structural(&self) -> [f64; 5] {
        [self.merge_rate, self.split_rate, self.omit_rate, self.insert_rate, self.reorder_rate]
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, v) in ["merge", "split", "omit", "insert", "reorder", "char_noise"]
            .iter()
            .zip(self.structural().into_iter().chain([self.char_noise]))
        {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthError::InvalidProfile(format!("{name} rate {v} outside [0, 1]")));
            }
        }
        let total: f64 = self.structural().iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(SynthError::InvalidProfile(format!("structural rates sum to {total} > 1")));
        }
        Ok(())
    }
}

/// Generated target side plus its exact gold alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthetic {
    pub target: Vec<Segment>,
    pub gold: AlignmentResult,
    /// Structural edits that could not be applied and were replaced by a copy.
    pub fallbacks: Vec<String>,
}

#[derive(Clone, Copy)]
enum Edit {
    Merge,
    Split,
    Omit,
    Insert,
    Reorder,
    Copy,
}

fn draw_edit(rng: &mut ChaCha8Rng, p: &NoiseProfile) -> Edit {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (rate, edit) in p.structural().into_iter().zip([Edit::Merge, Edit::Split, Edit::Omit, Edit::Insert, Edit::Reorder]) {
        acc += rate;
        if u < acc {
            return edit;
        }
    }
    Edit::Copy
}

/// Split point at the soft break closest to the middle: returns the two halves.
fn split_at_soft_break(text: &str) -> Option<(String, String)> {
    let chars: Vec<char> = text.chars().collect();
    let mid = chars.len() / 2;
    let cut = (1..chars.len().saturating_sub(1))
        .filter(|&k| matches!(chars[k - 1], ',' | ';' | ':') && chars[k] == ' ')
        .min_by_key(|&k| (k as i64 - mid as i64).abs())?;
    let left: String = chars[..cut].iter().collect();
    let right: String = chars[cut + 1..].iter().collect();
    (!left.trim().is_empty() && !right.trim().is_empty()).then_some((left, right))
}

const SCRIPTS: [(u32, u32); 4] = [(0x03B1, 0x03C9), (0x0430, 0x044F), (0x05D0, 0x05EA), (0x0E01, 0x0E2E)];

/// Letters of the first script none of whose letters occur in `source`.
fn foreign_alphabet(source: &[Segment]) -> Vec<char> {
    let used: HashSet<char> = source.iter().flat_map(|s| s.text.chars()).collect();
    for (lo, hi) in SCRIPTS {
        let letters: Vec<char> = (lo..=hi).filter_map(char::from_u32).filter(|c| c.is_alphabetic()).collect();
        if letters.iter().all(|c| !used.contains(c)) {
            return letters;
        }
    }
    (0x4E00..0x4F00).filter_map(char::from_u32).filter(|c| !used.contains(c)).collect()
}

fn inserted_text(rng: &mut ChaCha8Rng, alphabet: &[char]) -> String {
    let words = rng.random_range(6..12);
    let mut out: Vec<String> = (0..words)
        .map(|_| {
            let len = rng.random_range(3..8);
            (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
        })
        .collect();
    out.last_mut().unwrap().push('.');
    out.join(" ")
}

fn add_char_noise(text: &str, p: f64, rng: &mut ChaCha8Rng) -> String {
    if p <= 0.0 {
        return text.to_string();
    }
    text.chars()
        .map(|c| {
            if c.is_alphabetic() && rng.random::<f64>() < p {
                char::from(b'a' + rng.random_range(0..26u8))
            } else {
                c
            }
        })
        .collect()
}

/// Builds a pseudo-translation of `source` under `profile`.
pub fn generate(source: &[Segment], profile: &NoiseProfile, target_doc: &str) -> Result<Synthetic, SynthError> {
    profile.validate()?;
    if source.is_empty() {
        return Err(SynthError::EmptySource);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let alphabet = foreign_alphabet(source);
    let mut texts: Vec<String> = Vec::new();
    let mut beads: Vec<Bead> = Vec::new();
    let mut fallbacks = Vec::new();
    let n = source.len();
    let mut i = 0;
    let copy = |texts: &mut Vec<String>, beads: &mut Vec<Bead>, i: usize| {
        beads.push(Bead::span(i, 1, texts.len(), 1, None));
        texts.push(source[i].text.clone());
    };
    while i < n {
        match draw_edit(&mut rng, profile) {
            Edit::Merge if i + 1 < n => {
                beads.push(Bead::span(i, 2, texts.len(), 1, None));
                texts.push(format!("{} {}", source[i].text, source[i + 1].text));
                i += 2;
                continue;
            }
            Edit::Split => match split_at_soft_break(&source[i].text) {
                Some((a, b)) => {
                    beads.push(Bead::span(i, 1, texts.len(), 2, None));
                    texts.push(a);
                    texts.push(b);
                }
                None => {
                    fallbacks.push(format!("segment {i}: no soft break to split at, copied"));
                    copy(&mut texts, &mut beads, i);
                }
            },
            Edit::Omit => beads.push(Bead::span(i, 1, texts.len(), 0, None)),
            Edit::Insert => {
                copy(&mut texts, &mut beads, i);
                beads.push(Bead::span(i + 1, 0, texts.len(), 1, None));
                texts.push(inserted_text(&mut rng, &alphabet));
            }
            Edit::Reorder if i + 1 < n => {
                let j = texts.len();
                let mut first = Bead::span(i, 1, j + 1, 1, None);
                let mut second = Bead::span(i + 1, 1, j, 1, None);
                first.reordered = true;
                second.reordered = true;
                beads.push(first);
                beads.push(second);
                texts.push(source[i + 1].text.clone());
                texts.push(source[i].text.clone());
                i += 2;
                continue;
            }
            Edit::Merge | Edit::Reorder => {
                fallbacks.push(format!("segment {i}: last segment cannot pair with a successor, copied"));
                copy(&mut texts, &mut beads, i);
            }
            Edit::Copy => copy(&mut texts, &mut beads, i),
        }
        i += 1;
    }
    let mut target: Vec<Segment> = texts
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let mut s = Segment::new(target_doc, k, add_char_noise(t, profile.char_noise, &mut rng), source[0].granularity);
            s.ws_after = " ".into();
            s
        })
        .collect();
    if let Some(last) = target.last_mut() {
        last.ws_after.clear();
    }
    let gold = AlignmentResult {
        source_doc: source[0].doc_id.clone(),
        target_doc: target_doc.to_string(),
        params: AlignParams::default(),
        provider: "gold".into(),
        beads,
    };
    Ok(Synthetic { target, gold, fallbacks })
}

/// Aggregate of aligner performance against generated gold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    pub trials: usize,
    pub mean_f1: f64,
    pub min_f1: f64,
    pub mean_omission_recall: f64,
    pub min_omission_recall: f64,
}

/// Generates `trials` pseudo-translations (seeds `profile.seed + t`), aligns
/// each with the mock embedder and scores it strictly against gold.
pub fn recovery_score(
    source: &[Segment],
    profile: &NoiseProfile,
    params: &AlignParams,
    trials: usize,
) -> Result<RecoveryScore, SynthError> {
    let trials = trials.max(1);
    let embedder = BlockEmbedder::<f64>::new(Arc::new(MockProvider));
    let mut f1s = Vec::with_capacity(trials);
    let mut recalls = Vec::with_capacity(trials);
    for t in 0..trials {
        let synth = generate(source, &profile.with_seed(profile.seed + t as u64), "synthetic")?;
        if synth.target.is_empty() {
            f1s.push(if synth.gold.non_gap_count() == 0 { 1.0 } else { 0.0 });
            recalls.push(1.0);
            continue;
        }
        let predicted = align(source, &synth.target, &embedder, params)?;
        let score = score_against_gold(&predicted, &synth.gold, MatchMode::Strict)
            .expect("prediction and gold cover the same segments");
        f1s.push(score.f1);
        recalls.push(omission_recall(&predicted, &synth.gold));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RecoveryScore {
        trials,
        mean_f1: mean(&f1s),
        min_f1: min(&f1s),
        mean_omission_recall: mean(&recalls),
        min_omission_recall: min(&recalls),
    })
}

const LETTERS: &[u8] = b"aaabcdeeefghiiijklmnooopqrstuuuvwxyz";

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(2..10);
    (0..len).map(|_| char::from(LETTERS[rng.random_range(0..LETTERS.len())])).collect()
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// One pseudo-sentence of `clauses` comma- or semicolon-separated clauses.
pub fn pseudo_sentence(rng: &mut ChaCha8Rng, clauses: usize) -> String {
    let mut parts = Vec::with_capacity(clauses);
    for c in 0..clauses {
        let words = rng.random_range(4..10);
        let mut clause: Vec<String> = (0..words).map(|_| pseudo_word(rng)).collect();
        if c == 0 {
            clause[0] = capitalize(&clause[0]);
        }
        let mut text = clause.join(" ");
        text.push(if c + 1 == clauses {
            '.'
        } else if rng.random_bool(0.75) {
            ','
        } else {
            ';'
        });
        parts.push(text);
    }
    parts.join(" ")
}

/// Source text of a synthetic book in the line-oriented document format:
/// `# <key>` chapter headings followed by paragraph lines.
pub fn synthetic_book(chapters: usize, sentences_per_chapter: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for ch in 1..=chapters {
        out.push_str(&format!("# {ch}\n"));
        let mut written = 0;
        while written < sentences_per_chapter {
            let in_para = rng.random_range(2..6).min(sentences_per_chapter - written);
            let para: Vec<String> = (0..in_para)
                .map(|_| {
                    let clauses = rng.random_range(1..5);
                    pseudo_sentence(&mut rng, clauses)
                })
                .collect();
            out.push_str(&para.join(" "));
            out.push('\n');
            written += in_para;
        }
    }
    out
}

/// Sentence segments for a quick synthetic fixture, without going through text files.
pub fn synthetic_segments(doc_id: &str, n: usize, seed: u64) -> Vec<Segment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let clauses = rng.random_range(1..5);
            let mut s = Segment::new(doc_id, i, pseudo_sentence(&mut rng, clauses), Granularity::Sentence);
            s.ws_after = if i + 1 == n { String::new() } else { " ".into() };
            s
        })
        .collect()
}
