//! Density clustering under cosine distance.
//!
//! Core points have at least `min_pts` neighbours within `eps`, counting
//! themselves. Clusters are the connected components of core points,
//! numbered by their lowest member index. A border point joins the cluster
//! of its lowest-index core neighbour. Everything else is noise.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub const NOISE: i32 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { eps: 0.30, min_pts: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("eps must be positive, got {0}")]
    Eps(f64),
    #[error("min_pts must be at least 2, got {0}")]
    MinPts(usize),
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(self.eps > 0.0) {
            return Err(ClusterError::Eps(self.eps));
        }
        if self.min_pts < 2 {
            return Err(ClusterError::MinPts(self.min_pts));
        }
        Ok(())
    }
}

/// Row-major `n * n` matrix of `1 - cos`, computed in `f64`.
pub fn cosine_distances<F: Scalar>(rows: &[&[F]]) -> Vec<f64> {
    let wide = super::tsne::widen_rows(rows);
    let n = wide.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = 1.0 - crate::scalar::cosine(&wide[i], &wide[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Labels every point with a cluster number from 0, or [`NOISE`].
pub fn dbscan_distances(dist: &[f64], n: usize, cfg: &ClusterConfig) -> Result<Vec<i32>, ClusterError> {
    cfg.validate()?;
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist[i * n + j] <= cfg.eps).collect())
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= cfg.min_pts).collect();
    let mut labels = vec![NOISE; n];
    let mut next = 0;
    for start in 0..n {
        if !core[start] || labels[start] != NOISE {
            continue;
        }
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if core[q] && labels[q] == NOISE {
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    for i in 0..n {
        if !core[i] {
            if let Some(&c) = neighbours[i].iter().find(|&&j| core[j]) {
                labels[i] = labels[c];
            }
        }
    }
    Ok(labels)
}

pub fn dbscan<F: Scalar>(rows: &[&[F]], cfg: &ClusterConfig) -> Result<Vec<i32>, ClusterError> {
    dbscan_distances(&cosine_distances(rows), rows.len(), cfg)
}
