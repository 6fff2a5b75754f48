//! Multivariate dynamic time warping and pairwise distance matrices.

mod checkpoint;
mod features;
mod matrix;
mod pairwise;

use thiserror::Error;

pub use self::checkpoint::{
    CheckpointStore, Chunk, ManifestEntry, PairRecord, CHUNK_HEADER_LEN, CHUNK_MAGIC,
    CHUNK_RECORD_LEN, CHUNK_VERSION,
};
pub use self::features::{
    corpus_hash, segment_features, FeatureConfig, FeatureVectorSequence, PitchScaler,
};
pub use self::matrix::DistanceMatrix;
pub use self::pairwise::{
    canonical_pairs, pair_count, pairwise_matrix, pairwise_matrix_checkpointed, ChunkCallback, RunOptions,
    RunStats,
};

#[derive(Error, Debug)]
pub enum DtwError {
    #[error("DTW needs two nonempty sequences")]
    EmptySequence,

    #[error("frame width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),

    #[error("pairwise matrix needs at least 2 segments, got {0}")]
    TooFewSegments(usize),

    #[error("corrupt checkpoint chunk {chunk}: {reason}")]
    CorruptChunk { chunk: String, reason: String },

    #[error("stale checkpoint chunk {chunk}: {what} hash {found} does not match current {expected}; remove the checkpoint directory to recompute")]
    StaleCache {
        chunk: String,
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("checkpoint manifest has overlapping ranges {first:?} and {second:?}")]
    OverlappingRanges {
        first: std::ops::Range<u64>,
        second: std::ops::Range<u64>,
    },

    #[error("run interrupted after {completed} chunk(s)")]
    Interrupted { completed: usize },

    #[error("distance matrix CSV: {0}")]
    Csv(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Cost of aligning two sequences of feature frames.
///
/// Steps (1,0), (0,1), (1,1); local cost is the Euclidean distance between
/// frames. Among paths of equal cumulative cost the shortest wins. With
/// `normalize` the cumulative cost is divided by that path's length (number
/// of aligned cells).
pub fn dtw<T: AsRef<[f64]>>(a: &[T], b: &[T], normalize: bool) -> Result<f64, DtwError> {
    let (cost, len) = dtw_cost_and_length(a, b)?;
    Ok(if normalize { cost / len as f64 } else { cost })
}

/// Minimal cumulative cost and the length of the (shortest) optimal path.
pub fn dtw_cost_and_length<T: AsRef<[f64]>>(a: &[T], b: &[T]) -> Result<(f64, usize), DtwError> {
    if a.is_empty() || b.is_empty() {
        return Err(DtwError::EmptySequence);
    }
    let width = a[0].as_ref().len();
    if let Some(bad) = a.iter().chain(b).map(|f| f.as_ref().len()).find(|&w| w != width) {
        return Err(DtwError::WidthMismatch(width, bad));
    }

    let m = b.len();
    let mut prev: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); m];
    let mut curr: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); m];
    for (i, fa) in a.iter().enumerate() {
        for (j, fb) in b.iter().enumerate() {
            let local = euclidean(fa.as_ref(), fb.as_ref());
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = (f64::INFINITY, usize::MAX);
                if i > 0 {
                    best = better(best, prev[j]);
                }
                if j > 0 {
                    best = better(best, curr[j - 1]);
                }
                if i > 0 && j > 0 {
                    best = better(best, prev[j - 1]);
                }
                best
            };
            curr[j] = (best.0 + local, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m - 1])
}

fn better(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
