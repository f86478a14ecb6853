//! Exhaustive search over every monotone bead partition. Verification
//! oracle for the DP; exponential, so guarded by a size limit.

use std::cmp::Ordering;

use super::{check_inputs, path_to_result, transitions, AlignError, AlignParams, BlockScorer, Scored, Transition};
use crate::embedding::BlockEmbedder;
use crate::model::Segment;
use crate::scalar::Scalar;

pub const ORACLE_MAX_SEGMENTS: usize = 14;

struct Search<'a, F: Scalar> {
    scorer: &'a BlockScorer<F>,
    moves: Vec<Transition>,
    n: usize,
    m: usize,
    path: Vec<usize>,
    best: Option<(F, Vec<usize>)>,
}

/// Later beads decide first: compare from the last bead backwards by
/// transition rank, lower rank preferred. This mirrors backtracking from
/// the lattice corner with a per-cell preference.
fn prefer(candidate: &[usize], incumbent: &[usize]) -> bool {
    for (a, b) in candidate.iter().rev().zip(incumbent.iter().rev()) {
        match a.cmp(b) {
            Ordering::Less => return true,
            Ordering::Greater => return false,
            Ordering::Equal => {}
        }
    }
    false
}

impl<F: Scalar> Search<'_, F> {
    fn visit(&mut self, i: usize, j: usize, acc: F) {
        if (i, j) == (self.n, self.m) {
            let better = match &self.best {
                None => true,
                Some((score, path)) => acc > *score || (acc == *score && prefer(&self.path, path)),
            };
            if better {
                self.best = Some((acc, self.path.clone()));
            }
            return;
        }
        for k in 0..self.moves.len() {
            let (s, t) = self.moves[k];
            if i + s > self.n || j + t > self.m {
                continue;
            }
            let v = acc + self.scorer.transition_score(i, s, j, t);
            self.path.push(k);
            self.visit(i + s, j + t, v);
            self.path.pop();
        }
    }
}

/// Best alignment found by enumerating all partitions, under the same
/// scoring and tie-break as [`super::align`].
pub fn enumerate_optimal<F: Scalar>(
    src: &[Segment],
    tgt: &[Segment],
    embedder: &BlockEmbedder<F>,
    params: &AlignParams,
) -> Result<Scored<F>, AlignError> {
    check_inputs(src, tgt, params)?;
    let total = src.len() + tgt.len();
    if total > ORACLE_MAX_SEGMENTS {
        return Err(AlignError::OracleTooLarge(total));
    }
    let scorer = BlockScorer::build(src, tgt, embedder, params)?;
    let mut search = Search {
        scorer: &scorer,
        moves: transitions(params),
        n: src.len(),
        m: tgt.len(),
        path: Vec::new(),
        best: None,
    };
    search.visit(0, 0, F::zero());
    let (score, ranks) = search.best.expect("at least one partition exists");
    let path: Vec<Transition> = ranks.iter().map(|&k| search.moves[k]).collect();
    let result = path_to_result(&path, &scorer, src, tgt, params, embedder.provider_id());
    Ok(Scored { result, score })
}
