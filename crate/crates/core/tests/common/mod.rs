//! Builders shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mde_core::alignment::AlignParams;
use mde_core::analysis::{conditional_affinities, joint_affinities, kl_divergence, kl_gradient, squared_distances, NOISE};
use mde_core::model::{AlignmentResult, Bead, Granularity, Segment};

/// A random monotone partition of `n` source and `m` target segments into
/// beads of at most `max` segments per side, gaps included.
pub fn random_beads(seed: u64, n: usize, m: usize, max: usize) -> Vec<Bead> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut i, mut j) = (0, 0);
    let mut beads = Vec::new();
    while i < n || j < m {
        let mut s = rng.random_range(0..=max.min(n - i));
        let mut t = rng.random_range(0..=max.min(m - j));
        if s == 0 && t == 0 {
            continue;
        }
        // gaps cover a single segment
        if t == 0 {
            s = 1;
        } else if s == 0 {
            t = 1;
        }
        let sim = (s > 0 && t > 0).then(|| (rng.random_range(0.0..1.0f64) * 1000.0).round() / 1000.0);
        beads.push(Bead::span(i, s, j, t, sim));
        i += s;
        j += t;
    }
    beads
}

pub fn result(beads: Vec<Bead>) -> AlignmentResult {
    AlignmentResult {
        source_doc: "src".into(),
        target_doc: "tgt".into(),
        params: AlignParams::default(),
        provider: "mock-trigram-128".into(),
        beads,
    }
}

pub fn segments(doc: &str, texts: &[String]) -> Vec<Segment> {
    let n = texts.len();
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut s = Segment::new(doc, i, t.clone(), Granularity::Sentence);
            s.ws_after = if i + 1 == n { String::new() } else { " ".into() };
            s
        })
        .collect()
}

/// DBSCAN as the definition reads: core points have at least `min_pts`
/// points (themselves included) within `eps`; clusters are the classes of
/// core points chained by `eps`-steps, numbered by their first member; a
/// border point joins the cluster of its first core neighbour.
pub fn dbscan_by_definition(dist: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<i32> {
    let n = dist.len();
    let core: Vec<bool> = (0..n).map(|p| (0..n).filter(|&q| dist[p][q] <= eps).count() >= min_pts).collect();
    let mut linked = vec![vec![false; n]; n];
    for p in 0..n {
        for q in 0..n {
            linked[p][q] = core[p] && core[q] && dist[p][q] <= eps;
        }
    }
    for k in 0..n {
        for p in 0..n {
            for q in 0..n {
                if linked[p][k] && linked[k][q] {
                    linked[p][q] = true;
                }
            }
        }
    }
    let mut labels = vec![NOISE; n];
    let mut next = 0;
    for p in 0..n {
        if core[p] && labels[p] == NOISE {
            for q in 0..n {
                if linked[p][q] {
                    labels[q] = next;
                }
            }
            next += 1;
        }
    }
    for p in 0..n {
        if !core[p] {
            if let Some(q) = (0..n).find(|&q| core[q] && dist[p][q] <= eps) {
                labels[p] = labels[q];
            }
        }
    }
    labels
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

/// Points scattered around `centres` random directions in `d` dimensions.
pub fn blobs(rng: &mut ChaCha8Rng, n: usize, centres: usize, d: usize, spread: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let cs: Vec<Vec<f64>> = (0..centres).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let truth: Vec<usize> = (0..n).map(|i| i % centres).collect();
    let points = truth
        .iter()
        .map(|&c| cs[c].iter().map(|x| x + rng.random_range(-spread..spread)).collect())
        .collect();
    (points, truth)
}

/// Relative L2 error between the analytic KL gradient and central finite
/// differences, on `n` random points with random planar coordinates.
pub fn gradient_error(seed: u64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let p = joint_affinities(&conditional_affinities(&squared_distances(&rows), n, 3.0), n);
    let y: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
    let h = 1e-6;
    let analytic = kl_gradient(&p, &y);
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    for i in 0..n {
        for d in 0..2 {
            let mut plus = y.clone();
            let mut minus = y.clone();
            plus[i][d] += h;
            minus[i][d] -= h;
            let numeric = (kl_divergence(&p, &plus) - kl_divergence(&p, &minus)) / (2.0 * h);
            diff2 += (numeric - analytic[i][d]).powi(2);
            norm2 += analytic[i][d].powi(2);
        }
    }
    (diff2 / norm2).sqrt()
}
