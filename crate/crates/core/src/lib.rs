pub mod alignment;
pub mod analysis;
pub mod embedding;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod render;
pub mod scalar;
pub mod schema;
pub mod segmentation;
pub mod synthetic;
pub mod tei;

pub use scalar::Scalar;

/// Double-precision instantiations used by the pipeline and the CLI.
pub type Embedder = embedding::BlockEmbedder<f64>;
pub type Matrix = embedding::EmbeddingMatrix<f64>;
pub type Scorer = alignment::BlockScorer<f64>;
pub type ScoredAlignment = alignment::Scored<f64>;
