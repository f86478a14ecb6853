//! Exact t-SNE: perplexity-calibrated Gaussian affinities in the input
//! space, Student-t affinities in the plane, gradient descent on the KL
//! divergence with momentum and per-coordinate gains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 200;
const MIN_GAIN: f64 = 0.01;
const P_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    /// `None` picks `min(30, floor((n - 1) / 3))`.
    pub perplexity: Option<f64>,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            perplexity: None,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProjectionError {
    #[error("t-SNE needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("perplexity {requested} infeasible for this point count; it must lie in [1, {max}]")]
    Perplexity { requested: f64, max: f64 },
    #[error("at least 250 iterations required, got {0}")]
    Iterations(usize),
}

/// Largest perplexity accepted for `n` points.
pub fn max_perplexity(n: usize) -> f64 {
    (n.saturating_sub(1)) as f64 / 3.0
}

pub fn default_perplexity(n: usize) -> f64 {
    30f64.min((n.saturating_sub(1) / 3) as f64)
}

impl ProjectionConfig {
    /// Resolves the perplexity for `n` points, checking every bound.
    pub fn resolve(&self, n: usize) -> Result<f64, ProjectionError> {
        if n < 4 {
            return Err(ProjectionError::TooFewPoints(n));
        }
        if self.iterations < 250 {
            return Err(ProjectionError::Iterations(self.iterations));
        }
        let p = self.perplexity.unwrap_or_else(|| default_perplexity(n));
        let max = max_perplexity(n);
        if !(1.0..=max).contains(&p) {
            return Err(ProjectionError::Perplexity { requested: p, max });
        }
        Ok(p)
    }
}

/// Row-major `n * n` squared Euclidean distances.
pub fn squared_distances(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Gaussian conditional distribution of one row at precision `beta`, with
/// its Shannon entropy in nats.
fn row_distribution(dist: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (&d, p)) in dist.iter().zip(out.iter_mut()).enumerate() {
        *p = if j == i { 0.0 } else { (-(d - min) * beta).exp() };
        sum += *p;
        weighted += (d - min) * *p;
    }
    for p in out.iter_mut() {
        *p /= sum;
    }
    sum.ln() + beta * weighted / sum
}

/// Conditional affinities `p_{j|i}`, each row bisected to entropy `ln(perplexity)`.
/// Rows sum to one and the diagonal is zero.
pub fn conditional_affinities(dist2: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = &dist2[i * n..(i + 1) * n];
        let out = &mut p[i * n..(i + 1) * n];
        let (mut beta, mut lo, mut hi) = (1.0, f64::NEG_INFINITY, f64::INFINITY);
        for _ in 0..MAX_BISECTIONS {
            let h = row_distribution(row, i, beta, out);
            let diff = h - target;
            if diff.abs() < ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_infinite() { beta * 2.0 } else { (beta + hi) / 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_infinite() { beta / 2.0 } else { (beta + lo) / 2.0 };
            }
        }
    }
    p
}

/// Symmetrised joint affinities `(p_{j|i} + p_{i|j}) / 2n`, floored away from zero.
pub fn joint_affinities(cond: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(P_FLOOR);
            }
        }
    }
    p
}

/// Unnormalised Student-t kernel and its sum over ordered pairs.
fn student_kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    (num, z)
}

/// `KL(P || Q)` for joint affinities `p` and planar coordinates `y`.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let (num, z) = student_kernel(y);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i != j && pij > 0.0 {
                kl += pij * (pij / (num[i * n + j] / z)).ln();
            }
        }
    }
    kl
}

/// Analytic gradient of [`kl_divergence`] with respect to `y`.
pub fn kl_gradient(p: &[f64], y: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = y.len();
    let (num, z) = student_kernel(y);
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = num[i * n + j];
            let m = 4.0 * (p[i * n + j] - w / z) * w;
            grad[i][0] += m * (y[i][0] - y[j][0]);
            grad[i][1] += m * (y[i][1] - y[j][1]);
        }
    }
    grad
}

pub(crate) fn widen_rows<F: Scalar>(rows: &[&[F]]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|x| x.widen()).collect()).collect()
}

/// Projects `rows` to the plane. Deterministic for a given seed.
pub fn tsne_project<F: Scalar>(rows: &[&[F]], cfg: &ProjectionConfig) -> Result<Vec<[f64; 2]>, ProjectionError> {
    let n = rows.len();
    let perplexity = cfg.resolve(n)?;
    let dist = squared_distances(&widen_rows(rows));
    let p = joint_affinities(&conditional_affinities(&dist, n, perplexity), n);
    let exaggerated: Vec<f64> = p.iter().map(|v| v * cfg.exaggeration).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid standard deviation");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];

    for iter in 0..cfg.iterations {
        let early = iter < cfg.exaggeration_iters;
        let grad = kl_gradient(if early { &exaggerated } else { &p }, &y);
        let momentum = if iter < 250 { 0.5 } else { 0.8 };
        for i in 0..n {
            for d in 0..2 {
                let g = grad[i][d];
                gains[i][d] = if (g > 0.0) != (update[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(MIN_GAIN)
                };
                update[i][d] = momentum * update[i][d] - cfg.learning_rate * gains[i][d] * g;
                y[i][d] += update[i][d];
            }
        }
        let mean = y.iter().fold([0.0; 2], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
        for p in &mut y {
            p[0] -= mean[0] / n as f64;
            p[1] -= mean[1] / n as f64;
        }
    }
    Ok(y)
}

/// Trustworthiness of a projection: 1 minus the rank-weighted intrusion of
/// low-dimensional `k`-neighbours that are not high-dimensional ones.
pub fn trustworthiness(high_dist: &[f64], low: &[[f64; 2]], k: usize) -> f64 {
    let n = low.len();
    assert!(k >= 1 && 2 * n > 3 * k + 1, "k too large for {n} points");
    let low_dist: Vec<f64> = (0..n * n)
        .map(|ij| {
            let (i, j) = (ij / n, ij % n);
            (low[i][0] - low[j][0]).powi(2) + (low[i][1] - low[j][1]).powi(2)
        })
        .collect();
    let order = |dist: &[f64], i: usize| -> Vec<usize> {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| dist[i * n + a].total_cmp(&dist[i * n + b]).then(a.cmp(&b)));
        others
    };
    let mut penalty = 0.0;
    for i in 0..n {
        let high = order(high_dist, i);
        let low_nn = &order(&low_dist, i)[..k];
        for &j in low_nn {
            let rank = high.iter().position(|&x| x == j).expect("every other point is ranked") + 1;
            if rank > k {
                penalty += (rank - k) as f64;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![(i % 3) as f64, (i / 3) as f64, (i * i % 5) as f64 * 0.3]).collect()
    }

    #[test]
    fn bounds_are_enforced() {
        let cfg = ProjectionConfig::default();
        assert_eq!(cfg.resolve(3), Err(ProjectionError::TooFewPoints(3)));
        assert_eq!(cfg.resolve(4), Ok(1.0));
        assert_eq!(cfg.resolve(100), Ok(30.0));
        let big = ProjectionConfig { perplexity: Some(5.0), ..cfg.clone() };
        assert_eq!(big.resolve(10), Err(ProjectionError::Perplexity { requested: 5.0, max: 3.0 }));
        let short = ProjectionConfig { iterations: 100, ..cfg };
        assert_eq!(short.resolve(10), Err(ProjectionError::Iterations(100)));
    }

    #[test]
    fn conditional_rows_hit_the_perplexity() {
        let rows = grid(12);
        let d = squared_distances(&rows);
        let p = conditional_affinities(&d, 12, 3.0);
        for i in 0..12 {
            let row = &p[i * 12..(i + 1) * 12];
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let h: f64 = -row.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>();
            assert!((h - 3f64.ln()).abs() < 1e-4, "row {i}: entropy {h}");
        }
    }

    #[test]
    fn joint_affinities_are_symmetric_and_sum_to_one() {
        let d = squared_distances(&grid(9));
        let p = joint_affinities(&conditional_affinities(&d, 9, 2.0), 9);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(p[i * 9 + j], p[j * 9 + i]);
            }
        }
    }

    #[test]
    fn trustworthiness_of_an_isometry_is_one() {
        let pts: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, (i * i) as f64 * 0.1]).collect();
        let rows: Vec<Vec<f64>> = pts.iter().map(|p| p.to_vec()).collect();
        assert_eq!(trustworthiness(&squared_distances(&rows), &pts, 3), 1.0);
    }
}
