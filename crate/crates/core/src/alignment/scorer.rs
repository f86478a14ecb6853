use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AlignError, AlignParams};
use crate::embedding::BlockEmbedder;
use crate::model::Segment;
use crate::scalar::{dot, Scalar};

const MARGIN_K: usize = 4;
const MARGIN_SAMPLE: usize = 32;
const MARGIN_SEED: u64 = 0x6d61_7267_696e;

/// Precomputed block vectors for both sides of one alignment problem.
pub struct BlockScorer<F: Scalar> {
    /// `src[i][s - 1]` is the vector of source block `i..i+s`.
    src: Vec<Vec<Arc<[F]>>>,
    tgt: Vec<Vec<Arc<[F]>>>,
    lambda: F,
    sigma: F,
    margins: Option<(Vec<Vec<F>>, Vec<Vec<F>>)>,
}

fn blocks<F: Scalar>(
    segs: &[Segment],
    max: usize,
    embedder: &BlockEmbedder<F>,
) -> Result<Vec<Vec<Arc<[F]>>>, AlignError> {
    let texts: Vec<&str> = segs.iter().map(|s| s.text.as_str()).collect();
    let n = texts.len();
    let joined: Vec<String> = (0..n)
        .flat_map(|i| (1..=max).filter(move |s| i + s <= n).map(move |s| (i, s)))
        .map(|(i, s)| BlockEmbedder::<F>::join(&texts[i..i + s]))
        .collect();
    embedder.prefetch(&joined, 256)?;
    (0..texts.len())
        .map(|i| {
            (1..=max)
                .take_while(|s| i + s <= texts.len())
                .map(|s| embedder.embed_block(&texts[i..i + s]).map_err(AlignError::from))
                .collect()
        })
        .collect()
}

fn clamp_unit<F: Scalar>(x: F) -> F {
    x.max(-F::one()).min(F::one())
}

/// Mean of the `k` largest cosines of each block against a fixed sample of
/// the opposite side's single segments.
fn margin_table<F: Scalar>(own: &[Vec<Arc<[F]>>], other: &[Vec<Arc<[F]>>]) -> Vec<Vec<F>> {
    let mut rng = ChaCha8Rng::seed_from_u64(MARGIN_SEED);
    let picks: Vec<usize> = if other.len() <= MARGIN_SAMPLE {
        (0..other.len()).collect()
    } else {
        let mut v = sample(&mut rng, other.len(), MARGIN_SAMPLE).into_vec();
        v.sort_unstable();
        v
    };
    let k = MARGIN_K.min(picks.len()).max(1);
    own.iter()
        .map(|row| {
            row.iter()
                .map(|v| {
                    let mut sims: Vec<F> = picks.iter().map(|&p| clamp_unit(dot(v, &other[p][0]))).collect();
                    sims.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
                    let top = &sims[..k.min(sims.len())];
                    top.iter().copied().sum::<F>() / F::lit(top.len() as f64)
                })
                .collect()
        })
        .collect()
}

impl<F: Scalar> BlockScorer<F> {
    pub fn build(
        src: &[Segment],
        tgt: &[Segment],
        embedder: &BlockEmbedder<F>,
        params: &AlignParams,
    ) -> Result<Self, AlignError> {
        let src_blocks = blocks(src, params.max_src, embedder)?;
        let tgt_blocks = blocks(tgt, params.max_tgt, embedder)?;
        let margins = params
            .margin
            .then(|| (margin_table(&src_blocks, &tgt_blocks), margin_table(&tgt_blocks, &src_blocks)));
        Ok(BlockScorer {
            src: src_blocks,
            tgt: tgt_blocks,
            lambda: F::lit(params.merge_penalty),
            sigma: F::lit(params.gap_score),
            margins,
        })
    }

    pub fn n_src(&self) -> usize {
        self.src.len()
    }

    pub fn n_tgt(&self) -> usize {
        self.tgt.len()
    }

    pub fn src_block(&self, i: usize, s: usize) -> &[F] {
        &self.src[i][s - 1]
    }

    pub fn tgt_block(&self, j: usize, t: usize) -> &[F] {
        &self.tgt[j][t - 1]
    }

    /// Raw cosine of source block `i..i+s` against target block `j..j+t`.
    pub fn cosine(&self, i: usize, s: usize, j: usize, t: usize) -> F {
        clamp_unit(dot(self.src_block(i, s), self.tgt_block(j, t)))
    }

    /// Score of the transition `(s, t)` leaving cell `(i, j)`.
    pub fn transition_score(&self, i: usize, s: usize, j: usize, t: usize) -> F {
        if s == 0 || t == 0 {
            return self.sigma;
        }
        let mut sim = self.cosine(i, s, j, t);
        if let Some((ms, mt)) = &self.margins {
            let denom = (ms[i][s - 1] + mt[j][t - 1]) / F::lit(2.0);
            if denom > F::zero() {
                sim = sim / denom;
            }
        }
        sim - self.lambda * F::lit((s + t - 2) as f64)
    }
}

/// Cosine of the two blocks minus the merge penalty for segments beyond a 1-1 pair.
pub fn score_bead<F: Scalar>(
    src_block: &[&str],
    tgt_block: &[&str],
    embedder: &BlockEmbedder<F>,
    params: &AlignParams,
) -> Result<F, AlignError> {
    let (s, t) = (src_block.len(), tgt_block.len());
    if s == 0 || t == 0 || s > params.max_src || t > params.max_tgt {
        return Err(AlignError::InvalidParams(format!(
            "block shape ({s},{t}) outside 1..={} x 1..={}",
            params.max_src, params.max_tgt
        )));
    }
    let a = embedder.embed_block(src_block)?;
    let b = embedder.embed_block(tgt_block)?;
    Ok(clamp_unit(dot(&a, &b)) - F::lit(params.merge_penalty) * F::lit((s + t - 2) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{mock_embed, MockProvider};
    use crate::scalar::cosine;

    #[test]
    fn identical_singles_score_one() {
        let e = BlockEmbedder::<f64>::new(Arc::new(MockProvider));
        for lambda in [0.0, 0.15, 0.9] {
            let p = AlignParams { merge_penalty: lambda, ..AlignParams::default() };
            let v = score_bead(&["Era bello."], &["Era bello."], &e, &p).unwrap();
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn penalty_arithmetic_two_to_one() {
        // with raw cosine 0.95 and lambda 0.15 a 2-1 block scores 0.80
        let p = AlignParams::default();
        let raw = 0.95f64;
        let penalized = raw - p.merge_penalty * (2 + 1 - 2) as f64;
        assert!((penalized - 0.80).abs() < 1e-12);
    }

    #[test]
    fn block_score_matches_independent_cosine() {
        let e = BlockEmbedder::<f64>::new(Arc::new(MockProvider));
        let p = AlignParams::default();
        let src = ["Don Abbondio tornava bel bello dalla passeggiata", "diceva tranquillamente il suo ufizio"];
        let tgt = ["Don Abbondio was returning slowly from his walk"];
        let got = score_bead(&src, &tgt, &e, &p).unwrap();
        let a: Vec<f64> = mock_embed(&format!("{} {}", src[0], src[1]));
        let b: Vec<f64> = mock_embed(tgt[0]);
        let expected = cosine(&a, &b) - 0.15;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn oversized_block_is_rejected() {
        let e = BlockEmbedder::<f64>::new(Arc::new(MockProvider));
        let p = AlignParams { max_src: 1, ..AlignParams::default() };
        assert!(score_bead(&["a", "b"], &["c"], &e, &p).is_err());
    }
}
