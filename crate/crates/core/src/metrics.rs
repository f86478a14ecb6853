//! Readability-oriented alignment metrics and gold-standard scoring.
//!
//! The readability metrics need no reference alignment: the distribution of
//! bead types, how many human-comparable pairs survive relative to the source
//! segment count, and how long those pairs are in tokens.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::model::{token_count, AlignmentResult, Bead, BeadType, Segment};

pub const DEFAULT_LENGTH_THRESHOLD: usize = 60;
const BUCKET: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("document mismatch: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeShare {
    pub count: usize,
    pub share: f64,
}

/// Token-length summary. `histogram[k]` counts values in `[10k, 10k+9]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LengthStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: usize,
    pub max: usize,
    pub histogram: Vec<usize>,
}

impl LengthStats {
    pub fn from_values(values: &[usize]) -> Self {
        if values.is_empty() {
            return LengthStats::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let mean = sorted.iter().sum::<usize>() as f64 / n as f64;
        let median = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
        };
        let max = sorted[n - 1];
        let mut histogram = vec![0; max / BUCKET + 1];
        for v in &sorted {
            histogram[v / BUCKET] += 1;
        }
        LengthStats { count: n, mean, median, p95: percentile(&sorted, 0.95), max, histogram }
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[usize], q: f64) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlongBead {
    pub bead: usize,
    pub src_tokens: usize,
    pub tgt_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub source_segments: usize,
    pub target_segments: usize,
    pub beads: usize,
    /// Every bead type, including those with zero count.
    pub type_distribution: BTreeMap<BeadType, TypeShare>,
    pub pair_count: usize,
    pub gap_count: usize,
    /// Non-gap beads over source segments.
    pub pair_count_ratio: f64,
    /// All beads, gaps included, over source segments.
    pub bead_count_ratio: f64,
    pub src_lengths: LengthStats,
    pub tgt_lengths: LengthStats,
    /// Source plus target tokens of each non-gap bead.
    pub pair_lengths: LengthStats,
    pub length_threshold: usize,
    pub overlong_beads: Vec<OverlongBead>,
}

fn side_tokens(indices: &[usize], segs: &[Segment]) -> usize {
    indices.iter().map(|&i| token_count(&segs[i].text)).sum()
}

fn check_docs(result: &AlignmentResult, src: &[Segment], tgt: &[Segment]) -> Result<(), MetricsError> {
    if let Some(s) = src.iter().find(|s| s.doc_id != result.source_doc) {
        return Err(MetricsError::Mismatch(format!(
            "source segment from `{}`, alignment expects `{}`",
            s.doc_id, result.source_doc
        )));
    }
    if let Some(t) = tgt.iter().find(|t| t.doc_id != result.target_doc) {
        return Err(MetricsError::Mismatch(format!(
            "target segment from `{}`, alignment expects `{}`",
            t.doc_id, result.target_doc
        )));
    }
    let problems = result.partition_violations(src.len(), tgt.len());
    if let Some(p) = problems.first() {
        return Err(MetricsError::Mismatch(format!("alignment does not cover the given segments: {p}")));
    }
    Ok(())
}

pub fn compute_metrics(
    result: &AlignmentResult,
    src: &[Segment],
    tgt: &[Segment],
    length_threshold: usize,
) -> Result<MetricsReport, MetricsError> {
    check_docs(result, src, tgt)?;
    let total = result.beads.len();
    let mut counts: BTreeMap<BeadType, usize> = BeadType::ALL.iter().map(|&t| (t, 0)).collect();
    for b in &result.beads {
        *counts.entry(b.kind).or_default() += 1;
    }
    let type_distribution = counts
        .into_iter()
        .map(|(t, count)| {
            let share = if total == 0 { 0.0 } else { count as f64 / total as f64 };
            (t, TypeShare { count, share })
        })
        .collect();

    let mut src_lens = Vec::new();
    let mut tgt_lens = Vec::new();
    let mut pair_lens = Vec::new();
    let mut overlong_beads = Vec::new();
    for (k, b) in result.beads.iter().enumerate() {
        let s = side_tokens(&b.src, src);
        let t = side_tokens(&b.tgt, tgt);
        if !b.is_gap() {
            src_lens.push(s);
            tgt_lens.push(t);
            pair_lens.push(s + t);
        }
        if s > length_threshold || t > length_threshold {
            overlong_beads.push(OverlongBead { bead: k, src_tokens: s, tgt_tokens: t });
        }
    }
    let pair_count = result.non_gap_count();
    let ratio = |x: usize| if src.is_empty() { 0.0 } else { x as f64 / src.len() as f64 };
    Ok(MetricsReport {
        source_segments: src.len(),
        target_segments: tgt.len(),
        beads: total,
        type_distribution,
        pair_count,
        gap_count: total - pair_count,
        pair_count_ratio: ratio(pair_count),
        bead_count_ratio: ratio(total),
        src_lengths: LengthStats::from_values(&src_lens),
        tgt_lengths: LengthStats::from_values(&tgt_lens),
        pair_lengths: LengthStats::from_values(&pair_lens),
        length_threshold,
        overlong_beads,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Identical source and target index sets.
    Strict,
    /// At least one shared source and one shared target index.
    Lax,
}

impl std::str::FromStr for MatchMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(MatchMode::Strict),
            "lax" => Ok(MatchMode::Lax),
            other => Err(format!("unknown match mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldScore {
    pub mode: MatchMode,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `1 - F1`; gold has no possible/sure distinction.
    pub aer: f64,
    pub predicted_pairs: usize,
    pub gold_pairs: usize,
}

fn covered(r: &AlignmentResult) -> (usize, usize) {
    r.beads.iter().fold((0, 0), |(s, t), b| (s + b.src.len(), t + b.tgt.len()))
}

fn overlaps(a: &Bead, b: &Bead) -> bool {
    a.src.iter().any(|i| b.src.contains(i)) && a.tgt.iter().any(|j| b.tgt.contains(j))
}

pub fn score_against_gold(
    predicted: &AlignmentResult,
    gold: &AlignmentResult,
    mode: MatchMode,
) -> Result<GoldScore, MetricsError> {
    if predicted.source_doc != gold.source_doc || predicted.target_doc != gold.target_doc {
        return Err(MetricsError::Mismatch(format!(
            "predicted aligns {}→{}, gold aligns {}→{}",
            predicted.source_doc, predicted.target_doc, gold.source_doc, gold.target_doc
        )));
    }
    if covered(predicted) != covered(gold) {
        return Err(MetricsError::Mismatch(format!(
            "predicted covers {:?} segments, gold covers {:?}",
            covered(predicted),
            covered(gold)
        )));
    }
    let pred: Vec<&Bead> = predicted.beads.iter().filter(|b| !b.is_gap()).collect();
    let gold_pairs: Vec<&Bead> = gold.beads.iter().filter(|b| !b.is_gap()).collect();
    let (tp_pred, tp_gold) = match mode {
        MatchMode::Strict => {
            let keys: HashSet<(&[usize], &[usize])> =
                gold_pairs.iter().map(|b| (b.src.as_slice(), b.tgt.as_slice())).collect();
            let tp = pred.iter().filter(|b| keys.contains(&(b.src.as_slice(), b.tgt.as_slice()))).count();
            (tp, tp)
        }
        MatchMode::Lax => (
            pred.iter().filter(|p| gold_pairs.iter().any(|g| overlaps(p, g))).count(),
            gold_pairs.iter().filter(|g| pred.iter().any(|p| overlaps(p, g))).count(),
        ),
    };
    let (precision, recall) = if pred.is_empty() && gold_pairs.is_empty() {
        (1.0, 1.0)
    } else {
        let p = if pred.is_empty() { 0.0 } else { tp_pred as f64 / pred.len() as f64 };
        let r = if gold_pairs.is_empty() { 0.0 } else { tp_gold as f64 / gold_pairs.len() as f64 };
        (p, r)
    };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(GoldScore {
        mode,
        precision,
        recall,
        f1,
        aer: 1.0 - f1,
        predicted_pairs: pred.len(),
        gold_pairs: gold_pairs.len(),
    })
}

/// Fraction of gold omissions (source indices in gold 1-0 beads) that the
/// prediction also leaves unaligned. `1.0` when gold has no omissions.
pub fn omission_recall(predicted: &AlignmentResult, gold: &AlignmentResult) -> f64 {
    let omitted: Vec<usize> = gold.beads.iter().filter(|b| b.kind == BeadType::Omission).flat_map(|b| b.src.clone()).collect();
    if omitted.is_empty() {
        return 1.0;
    }
    let predicted_gaps: HashSet<usize> = predicted
        .beads
        .iter()
        .filter(|b| b.kind == BeadType::Omission)
        .flat_map(|b| b.src.iter().copied())
        .collect();
    omitted.iter().filter(|i| predicted_gaps.contains(i)).count() as f64 / omitted.len() as f64
}

/// Sentence-level against phrase-level metrics for one document pair.
/// Deltas are phrase minus sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularityComparison {
    pub sentence: MetricsReport,
    pub phrase: MetricsReport,
    pub delta_pair_count: i64,
    pub delta_max_pair_length: i64,
    pub delta_p95_pair_length: i64,
    pub delta_overlong: i64,
}

pub fn compare_granularities(
    sentence: (&AlignmentResult, &[Segment], &[Segment]),
    phrase: (&AlignmentResult, &[Segment], &[Segment]),
    length_threshold: usize,
) -> Result<GranularityComparison, MetricsError> {
    let s = compute_metrics(sentence.0, sentence.1, sentence.2, length_threshold)?;
    let p = compute_metrics(phrase.0, phrase.1, phrase.2, length_threshold)?;
    let d = |a: usize, b: usize| b as i64 - a as i64;
    Ok(GranularityComparison {
        delta_pair_count: d(s.pair_count, p.pair_count),
        delta_max_pair_length: d(s.pair_lengths.max, p.pair_lengths.max),
        delta_p95_pair_length: d(s.pair_lengths.p95, p.pair_lengths.p95),
        delta_overlong: d(s.overlong_beads.len(), p.overlong_beads.len()),
        sentence: s,
        phrase: p,
    })
}
