//! Graph similarity, bisection and the intra/inter comparison.

pub mod kl;
pub mod stats;
pub mod sweep;
pub mod wl;

use thiserror::Error;

pub use self::kl::{intra_similarity, kl_bisect, Bisection};
pub use self::sweep::{corpus_heatmaps, k_sweep, Heatmaps, KLevel, SimilarityReport};
pub use self::wl::{wl_kernel, WlConfig, WlFeatures, MAX_WL_ITERATIONS};

#[derive(Error, Debug)]
pub enum AnalysisError {
    #[error("graph {graph}: node {node} has no label")]
    Unlabeled { graph: String, node: String },

    #[error("WL iterations must be at most 10, got {0}")]
    TooManyIterations(usize),

    #[error("graph {graph} has {n} nodes; bisection needs at least 4")]
    TooSmall { graph: String, n: usize },

    #[error("similarity statistics need at least 3 pieces, got {0}")]
    TooFewPieces(usize),

    #[error("{graphs} graphs but {groups} group assignments")]
    GroupMismatch { graphs: usize, groups: usize },
}
