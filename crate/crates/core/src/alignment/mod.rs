//! Monotone dynamic-programming alignment of two segment sequences.
//!
//! `D[i][j]` is the best score of aligning the first `i` source and `j`
//! target segments. Transitions are gaps `(1,0)`/`(0,1)` worth the gap
//! score, or blocks `(s,t)` with `s <= S`, `t <= T` worth the cosine of the
//! two blocks' embeddings minus `lambda * (s + t - 2)`.

mod banded;
mod oracle;
mod params;
mod scorer;

use crate::embedding::{BlockEmbedder, EmbedError};
use crate::model::{AlignmentResult, Bead, Segment};
use crate::scalar::Scalar;

pub use banded::{anchor_banded_align, find_anchors};
pub use oracle::{enumerate_optimal, ORACLE_MAX_SEGMENTS};
pub use params::AlignParams;
pub use scorer::{score_bead, BlockScorer};

#[derive(Debug, thiserror::Error)]
pub enum AlignError {
    #[error("invalid alignment parameters: {0}")]
    InvalidParams(String),
    #[error("cannot align an empty {0} sequence")]
    EmptyInput(&'static str),
    #[error("exhaustive search refused: {0} segments exceeds the limit of {ORACLE_MAX_SEGMENTS}")]
    OracleTooLarge(usize),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// A step in the alignment lattice: `(source segments, target segments)`.
pub type Transition = (usize, usize);

/// Transitions in tie-break preference order: gaps first with `(1,0)` ahead
/// of `(0,1)`, then blocks by ascending `s + t`, then ascending `s`.
pub fn transitions(params: &AlignParams) -> Vec<Transition> {
    let mut blocks: Vec<Transition> = (1..=params.max_src)
        .flat_map(|s| (1..=params.max_tgt).map(move |t| (s, t)))
        .collect();
    blocks.sort_by_key(|&(s, t)| (s + t, s));
    let mut all = vec![(1, 0), (0, 1)];
    all.extend(blocks);
    all
}

/// Optimal path with its total score.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored<F> {
    pub result: AlignmentResult,
    pub score: F,
}

fn check_inputs(src: &[Segment], tgt: &[Segment], params: &AlignParams) -> Result<(), AlignError> {
    params.validate()?;
    if src.is_empty() {
        return Err(AlignError::EmptyInput("source"));
    }
    if tgt.is_empty() {
        return Err(AlignError::EmptyInput("target"));
    }
    Ok(())
}

/// Turns a transition path into beads, recording each block's raw cosine.
pub(crate) fn path_to_result<F: Scalar>(
    path: &[Transition],
    scorer: &BlockScorer<F>,
    src: &[Segment],
    tgt: &[Segment],
    params: &AlignParams,
    provider: &str,
) -> AlignmentResult {
    let mut beads = Vec::with_capacity(path.len());
    let (mut i, mut j) = (0, 0);
    for &(s, t) in path {
        let sim = (s > 0 && t > 0).then(|| scorer.cosine(i, s, j, t).widen());
        beads.push(Bead::span(i, s, j, t, sim));
        i += s;
        j += t;
    }
    AlignmentResult {
        source_doc: src[0].doc_id.clone(),
        target_doc: tgt[0].doc_id.clone(),
        params: params.clone(),
        provider: provider.to_string(),
        beads,
    }
}

/// Fills the DP table over cells accepted by `allowed` and backtracks.
/// Returns `None` when `(n, m)` is unreachable.
pub(crate) fn solve<F: Scalar>(
    scorer: &BlockScorer<F>,
    params: &AlignParams,
    allowed: impl Fn(usize, usize) -> bool,
) -> Option<(Vec<Transition>, F)> {
    let (n, m) = (scorer.n_src(), scorer.n_tgt());
    let width = m + 1;
    let moves = transitions(params);
    let mut best = vec![F::neg_infinity(); (n + 1) * width];
    let mut back: Vec<u8> = vec![u8::MAX; (n + 1) * width];
    best[0] = F::zero();
    for i in 0..=n {
        for j in 0..=m {
            if (i, j) == (0, 0) || !allowed(i, j) {
                continue;
            }
            let mut cell = F::neg_infinity();
            let mut arg = u8::MAX;
            for (k, &(s, t)) in moves.iter().enumerate() {
                if s > i || t > j {
                    continue;
                }
                let prev = best[(i - s) * width + (j - t)];
                if prev == F::neg_infinity() {
                    continue;
                }
                let v = prev + scorer.transition_score(i - s, s, j - t, t);
                if v > cell {
                    cell = v;
                    arg = k as u8;
                }
            }
            best[i * width + j] = cell;
            back[i * width + j] = arg;
        }
    }
    let total = best[n * width + m];
    if total == F::neg_infinity() {
        return None;
    }
    let mut path = Vec::new();
    let (mut i, mut j) = (n, m);
    while (i, j) != (0, 0) {
        let (s, t) = moves[back[i * width + j] as usize];
        path.push((s, t));
        i -= s;
        j -= t;
    }
    path.reverse();
    Some((path, total))
}

/// Exact alignment over the full lattice, with its optimal score.
pub fn align_scored<F: Scalar>(
    src: &[Segment],
    tgt: &[Segment],
    embedder: &BlockEmbedder<F>,
    params: &AlignParams,
) -> Result<Scored<F>, AlignError> {
    check_inputs(src, tgt, params)?;
    let scorer = BlockScorer::build(src, tgt, embedder, params)?;
    let (path, score) = solve(&scorer, params, |_, _| true).expect("full lattice always reaches its corner");
    let result = path_to_result(&path, &scorer, src, tgt, params, embedder.provider_id());
    Ok(Scored { result, score })
}

/// Aligns `src` against `tgt`. Dispatches to the banded variant when
/// `params.band` is set.
pub fn align<F: Scalar>(
    src: &[Segment],
    tgt: &[Segment],
    embedder: &BlockEmbedder<F>,
    params: &AlignParams,
) -> Result<AlignmentResult, AlignError> {
    if params.band.is_some() {
        return anchor_banded_align(src, tgt, embedder, params).map(|s| s.result);
    }
    align_scored(src, tgt, embedder, params).map(|s| s.result)
}

/// Score of an existing bead path under `params`, summed left to right.
pub fn path_score<F: Scalar>(
    result: &AlignmentResult,
    scorer: &BlockScorer<F>,
) -> F {
    let mut total = F::zero();
    for b in &result.beads {
        let i = b.src.first().copied().unwrap_or(0);
        let j = b.tgt.first().copied().unwrap_or(0);
        total = total + scorer.transition_score(i, b.src.len(), j, b.tgt.len());
    }
    total
}
