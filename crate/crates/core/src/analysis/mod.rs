//! Embedding-space diagnostics over an alignment: a planar projection of
//! every bead side, density clusters in the original space, and the list of
//! beads worth a reader's attention.

mod dbscan;
mod tsne;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use dbscan::{cosine_distances, dbscan, dbscan_distances, ClusterConfig, ClusterError, NOISE};
pub use tsne::{
    conditional_affinities, default_perplexity, joint_affinities, kl_divergence, kl_gradient, max_perplexity,
    squared_distances, trustworthiness, tsne_project, ProjectionConfig, ProjectionError,
};

use crate::embedding::{BlockEmbedder, EmbedError};
use crate::model::{bead_id, AlignmentResult, BeadType, Segment};
use crate::scalar::{cosine, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub projection: ProjectionConfig,
    pub cluster: ClusterConfig,
    pub outlier_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            projection: ProjectionConfig::default(),
            cluster: ClusterConfig::default(),
            outlier_threshold: 0.4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("bead {bead} references segment {index} beyond the {len} {side} segments")]
    Mismatch { bead: String, side: Side, index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Source => "source",
            Side::Target => "target",
        })
    }
}

/// One bead side placed in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub bead: String,
    pub side: Side,
    pub segments: Vec<usize>,
    pub x: f64,
    pub y: f64,
    pub cluster: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutlierReason {
    Omission,
    Insertion,
    LowSimilarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub bead: String,
    #[serde(rename = "type")]
    pub kind: BeadType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<f64>,
    pub reason: OutlierReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub points: Vec<Point>,
    /// False when there were too few points to project; coordinates are then zero.
    pub projected: bool,
    pub perplexity: Option<f64>,
    pub cluster_count: usize,
    pub ideal_pair_fraction: f64,
    pub average_intra_cluster_similarity: f64,
    pub outliers: Vec<Outlier>,
}

impl AnalysisReport {
    pub fn outlier_ids(&self) -> Vec<&str> {
        self.outliers.iter().map(|o| o.bead.as_str()).collect()
    }
}

fn side_texts<'a>(
    idx: &[usize],
    segs: &'a [Segment],
    bead: usize,
    side: Side,
) -> Result<Vec<&'a str>, AnalysisError> {
    idx.iter()
        .map(|&i| {
            segs.get(i).map(|s| s.text.as_str()).ok_or_else(|| AnalysisError::Mismatch {
                bead: bead_id(bead),
                side,
                index: i,
                len: segs.len(),
            })
        })
        .collect()
}

/// Mean pairwise cosine inside each cluster, averaged over clusters.
fn intra_cluster_similarity(vectors: &[Vec<f64>], labels: &[i32]) -> f64 {
    let mut members: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != NOISE {
            members.entry(l).or_default().push(i);
        }
    }
    let means: Vec<f64> = members
        .values()
        .filter(|m| m.len() >= 2)
        .map(|m| {
            let mut total = 0.0;
            let mut pairs = 0usize;
            for (a, &i) in m.iter().enumerate() {
                for &j in &m[a + 1..] {
                    total += cosine(&vectors[i], &vectors[j]);
                    pairs += 1;
                }
            }
            total / pairs as f64
        })
        .collect();
    if means.is_empty() {
        0.0
    } else {
        means.iter().sum::<f64>() / means.len() as f64
    }
}

/// Embeds each bead side, clusters the vectors, projects them, and lists
/// gap beads and low-similarity beads as outliers.
pub fn analyze<F: Scalar>(
    result: &AlignmentResult,
    src: &[Segment],
    tgt: &[Segment],
    embedder: &BlockEmbedder<F>,
    cfg: &AnalysisConfig,
) -> Result<AnalysisReport, AnalysisError> {
    let mut points = Vec::new();
    let mut vectors: Vec<Vec<F>> = Vec::new();
    let mut outliers = Vec::new();
    for (k, bead) in result.beads.iter().enumerate() {
        for (side, idx, segs) in [(Side::Source, &bead.src, src), (Side::Target, &bead.tgt, tgt)] {
            if idx.is_empty() {
                continue;
            }
            let texts = side_texts(idx, segs, k, side)?;
            vectors.push(embedder.embed_block(&texts)?.to_vec());
            points.push(Point { bead: bead_id(k), side, segments: idx.clone(), x: 0.0, y: 0.0, cluster: NOISE });
        }
        let reason = match bead.kind {
            BeadType::Omission => Some(OutlierReason::Omission),
            BeadType::Insertion => Some(OutlierReason::Insertion),
            _ if bead.similarity.is_some_and(|s| s < cfg.outlier_threshold) => Some(OutlierReason::LowSimilarity),
            _ => None,
        };
        if let Some(reason) = reason {
            outliers.push(Outlier { bead: bead_id(k), kind: bead.kind, sim: bead.similarity, reason });
        }
    }

    let rows: Vec<&[F]> = vectors.iter().map(Vec::as_slice).collect();
    let labels = if rows.is_empty() { Vec::new() } else { dbscan(&rows, &cfg.cluster)? };
    let projected = rows.len() >= 4;
    let perplexity = if projected {
        let coords = tsne_project(&rows, &cfg.projection)?;
        for (p, c) in points.iter_mut().zip(coords) {
            p.x = c[0];
            p.y = c[1];
        }
        Some(cfg.projection.resolve(rows.len())?)
    } else {
        None
    };
    for (p, &l) in points.iter_mut().zip(&labels) {
        p.cluster = l;
    }

    let mut pairs = 0usize;
    let mut ideal = 0usize;
    let mut cursor = 0;
    for bead in &result.beads {
        if bead.is_gap() {
            cursor += 1;
            continue;
        }
        pairs += 1;
        let (a, b) = (labels[cursor], labels[cursor + 1]);
        if a != NOISE && a == b {
            ideal += 1;
        }
        cursor += 2;
    }
    let wide: Vec<Vec<f64>> = vectors.iter().map(|v| v.iter().map(|x| x.widen()).collect()).collect();
    let cluster_count = labels.iter().copied().filter(|&l| l != NOISE).max().map_or(0, |m| m as usize + 1);
    Ok(AnalysisReport {
        points,
        projected,
        perplexity,
        cluster_count,
        ideal_pair_fraction: if pairs == 0 { 0.0 } else { ideal as f64 / pairs as f64 },
        average_intra_cluster_similarity: intra_cluster_similarity(&wide, &labels),
        outliers,
    })
}

/// Source segments that two alignments of the same source group
/// differently: the containing bead's source span differs.
pub fn pivot_disagreements(a: &AlignmentResult, b: &AlignmentResult) -> Vec<usize> {
    fn spans(r: &AlignmentResult) -> BTreeMap<usize, (usize, usize)> {
        r.beads
            .iter()
            .filter(|b| !b.src.is_empty())
            .flat_map(|b| {
                let span = (b.src[0], b.src.len());
                b.src.iter().map(move |&i| (i, span))
            })
            .collect()
    }
    let (sa, sb) = (spans(a), spans(b));
    sa.iter().filter(|(i, span)| sb.get(i) != Some(span)).map(|(i, _)| *i).collect()
}
