//! Deterministic character-trigram embedder.
//!
//! Each trigram contributes a signed unit bump at `hash % d`, with the sign
//! taken from bit 63 of the hash. The sum is L2-normalised. Because the
//! vector of a concatenation is (up to normalisation) the sum of its parts'
//! vectors, merged blocks score high against their pieces.

use super::{EmbedError, EmbeddingProvider};
use crate::scalar::{normalize_in_place, Scalar};

pub const MOCK_DIM: usize = 128;
const SEED: u64 = 0x6d64_655f_6d6f_636b;

/// FNV-1a over the bytes, seeded, followed by a SplitMix64 finalizer.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ SEED;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Unnormalised trigram sum; texts shorter than three chars count as one gram.
pub fn trigram_counts(text: &str, d: usize) -> Vec<i64> {
    let chars: Vec<char> = text.chars().collect();
    let mut v = vec![0i64; d];
    let mut bump = |gram: &[char]| {
        let s: String = gram.iter().collect();
        let h = stable_hash(s.as_bytes());
        let idx = (h % d as u64) as usize;
        v[idx] += if h >> 63 == 1 { -1 } else { 1 };
    };
    if chars.len() < 3 {
        bump(&chars);
    } else {
        chars.windows(3).for_each(&mut bump);
    }
    v
}

pub fn mock_embed<F: Scalar>(text: &str) -> Vec<F> {
    let counts = trigram_counts(text, MOCK_DIM);
    let mut v: Vec<F> = counts.iter().map(|&c| F::lit(c as f64)).collect();
    if !normalize_in_place(&mut v) {
        // every bump cancelled out; fall back to a fixed axis
        v[(stable_hash(text.as_bytes()) % MOCK_DIM as u64) as usize] = F::one();
    }
    v
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockProvider;

impl<F: Scalar> EmbeddingProvider<F> for MockProvider {
    fn provider_id(&self) -> &str {
        "mock-trigram-128"
    }

    fn dimension(&self) -> usize {
        MOCK_DIM
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<F>>, EmbedError> {
        Ok(texts.iter().map(|t| mock_embed(t)).collect())
    }
}
