//! Two-pass alignment: mutual-best 1-1 anchors, then the exact DP confined
//! to a band around the line through the anchors.

use super::{check_inputs, path_to_result, solve, AlignError, AlignParams, BlockScorer, Scored};
use crate::embedding::BlockEmbedder;
use crate::model::Segment;
use crate::scalar::Scalar;

pub const ANCHOR_MIN_COSINE: f64 = 0.6;

fn argmax<F: Scalar>(values: impl Iterator<Item = F>) -> Option<(usize, F)> {
    let mut best: Option<(usize, F)> = None;
    for (k, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best
}

/// Longest subsequence of `pairs` (sorted by source index) whose target
/// indices strictly increase. Earliest-ending chains win ties.
fn longest_increasing(pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut tails: Vec<usize> = Vec::new();
    let mut parent: Vec<Option<usize>> = vec![None; pairs.len()];
    for (k, &(_, j)) in pairs.iter().enumerate() {
        let pos = tails.partition_point(|&t| pairs[t].1 < j);
        parent[k] = pos.checked_sub(1).map(|p| tails[p]);
        if pos == tails.len() {
            tails.push(k);
        } else {
            tails[pos] = k;
        }
    }
    let mut out = Vec::with_capacity(tails.len());
    let mut cur = tails.last().copied();
    while let Some(k) = cur {
        out.push(pairs[k]);
        cur = parent[k];
    }
    out.reverse();
    out
}

/// Jointly monotone mutual top-1 pairs with cosine at least [`ANCHOR_MIN_COSINE`].
pub fn find_anchors<F: Scalar>(scorer: &BlockScorer<F>) -> Vec<(usize, usize)> {
    let (n, m) = (scorer.n_src(), scorer.n_tgt());
    let floor = F::lit(ANCHOR_MIN_COSINE);
    let best_tgt: Vec<Option<(usize, F)>> = (0..n).map(|i| argmax((0..m).map(|j| scorer.cosine(i, 1, j, 1)))).collect();
    let best_src: Vec<Option<usize>> = (0..m)
        .map(|j| argmax((0..n).map(|i| scorer.cosine(i, 1, j, 1))).map(|(i, _)| i))
        .collect();
    let mutual: Vec<(usize, usize)> = best_tgt
        .iter()
        .enumerate()
        .filter_map(|(i, b)| {
            let (j, c) = (*b)?;
            (c >= floor && best_src[j] == Some(i)).then_some((i, j))
        })
        .collect();
    longest_increasing(&mutual)
}

/// Expected target position for each source row, interpolated through the
/// anchors' lattice corners.
fn band_centres(anchors: &[(usize, usize)], n: usize, m: usize) -> Vec<f64> {
    let mut knots = vec![(0.0, 0.0)];
    knots.extend(anchors.iter().map(|&(i, j)| ((i + 1) as f64, (j + 1) as f64)));
    if knots.last() != Some(&(n as f64, m as f64)) {
        knots.push((n as f64, m as f64));
    }
    (0..=n)
        .map(|i| {
            let x = i as f64;
            let k = knots.partition_point(|&(kx, _)| kx < x).clamp(1, knots.len() - 1);
            let (x0, y0) = knots[k - 1];
            let (x1, y1) = knots[k];
            if x1 == x0 {
                y1
            } else {
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        })
        .collect()
}

/// Banded alignment. Falls back to the full lattice when there are no
/// anchors or the band does not connect the corners.
pub fn anchor_banded_align<F: Scalar>(
    src: &[Segment],
    tgt: &[Segment],
    embedder: &BlockEmbedder<F>,
    params: &AlignParams,
) -> Result<Scored<F>, AlignError> {
    check_inputs(src, tgt, params)?;
    let width = params.band.unwrap_or(params.max_src + params.max_tgt) as f64;
    let scorer = BlockScorer::build(src, tgt, embedder, params)?;
    let anchors = find_anchors(&scorer);
    let banded = if anchors.is_empty() {
        None
    } else {
        let centres = band_centres(&anchors, src.len(), tgt.len());
        solve(&scorer, params, |i, j| (j as f64 - centres[i]).abs() <= width)
    };
    let (path, score) = match banded {
        Some(found) => found,
        None => solve(&scorer, params, |_, _| true).expect("full lattice always reaches its corner"),
    };
    let result = path_to_result(&path, &scorer, src, tgt, params, embedder.provider_id());
    Ok(Scored { result, score })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lis_keeps_monotone_chain() {
        let pairs = [(0, 0), (1, 5), (2, 1), (3, 2), (4, 6)];
        assert_eq!(longest_increasing(&pairs), vec![(0, 0), (2, 1), (3, 2), (4, 6)]);
        assert!(longest_increasing(&[]).is_empty());
    }

    #[test]
    fn centres_follow_diagonal_anchors() {
        let c = band_centres(&[(0, 0), (1, 1), (2, 2)], 4, 4);
        assert_eq!(c, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let skew = band_centres(&[], 2, 6);
        assert_eq!(skew, vec![0.0, 3.0, 6.0]);
    }
}
