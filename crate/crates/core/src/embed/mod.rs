//! Segment-level MDS, graph2vec embeddings, clustering and projection.

pub mod cluster;
pub mod graph2vec;
pub mod mds;
pub mod pca;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::cluster::{adjusted_rand_index, kmeans, KMeansResult};
pub use self::graph2vec::{cosine, graph2vec_train, wl_document, Graph2VecConfig, Graph2VecModel};
pub use self::mds::{joint_segment_mds, knn_accuracy, silhouette, smacof, MdsFit, MdsResult};
pub use self::pca::{pca_2d, Pca2};

#[derive(Error, Debug)]
pub enum EmbedError {
    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },

    #[error("all distances are zero; nothing to embed")]
    DegenerateDistances,

    #[error("documents contain no tokens")]
    EmptyVocabulary,

    #[error("cluster count {k} must be between 1 and {n}")]
    BadClusterCount { k: usize, n: usize },

    #[error("vectors differ in length")]
    DimensionMismatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
}

/// Graph vectors with their cluster assignment and 2-D projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub piece_ids: Vec<String>,
    pub groups: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub cluster_labels: Vec<usize>,
    pub pca_points: Vec<[f64; 2]>,
    pub epoch_loss: Vec<f64>,
}
