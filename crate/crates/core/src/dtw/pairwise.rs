use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{CheckpointStore, Chunk, PairRecord};
use super::{dtw, DistanceMatrix, DtwError, FeatureVectorSequence};

/// Number of unordered pairs among `n` items.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Row-major upper triangle: (0,1), (0,2), ..., (0,n-1), (1,2), ...
pub fn canonical_pairs(n: usize) -> Vec<(u32, u32)> {
    (0..n as u32)
        .flat_map(|i| (i + 1..n as u32).map(move |j| (i, j)))
        .collect()
}

fn check_inputs(ids: &[String], seqs: &[FeatureVectorSequence]) -> Result<(), DtwError> {
    assert_eq!(ids.len(), seqs.len(), "one id per sequence");
    if seqs.len() < 2 {
        return Err(DtwError::TooFewSegments(seqs.len()));
    }
    if seqs.iter().any(|s| s.is_empty()) {
        return Err(DtwError::EmptySequence);
    }
    Ok(())
}

fn pair_distance(seqs: &[FeatureVectorSequence], (i, j): (u32, u32), normalize: bool) -> f64 {
    dtw(&seqs[i as usize].frames, &seqs[j as usize].frames, normalize)
        .expect("inputs checked nonempty with equal widths")
}

/// All pairwise distances, computed in parallel without persistence.
pub fn pairwise_matrix(
    ids: &[String],
    seqs: &[FeatureVectorSequence],
    normalize: bool,
) -> Result<DistanceMatrix, DtwError> {
    check_inputs(ids, seqs)?;
    let pairs = canonical_pairs(seqs.len());
    let values: Vec<f64> = pairs.par_iter().map(|&p| pair_distance(seqs, p, normalize)).collect();
    let mut m = DistanceMatrix::zeros(ids.to_vec());
    for (&(i, j), v) in pairs.iter().zip(values) {
        m.set(i as usize, j as usize, v);
    }
    Ok(m)
}

pub type ChunkCallback = Arc<dyn Fn(usize) + Send + Sync>;

#[derive(Clone)]
pub struct RunOptions {
    pub chunk_size: usize,
    /// Stop with [`DtwError::Interrupted`] once this many new chunks exist.
    pub stop_after_chunks: Option<usize>,
    /// Called with the running count after each new chunk is persisted.
    pub on_chunk_written: Option<ChunkCallback>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { chunk_size: 256, stop_after_chunks: None, on_chunk_written: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub pairs: usize,
    pub chunks_reused: usize,
    pub chunks_computed: usize,
    /// Chunk files that failed verification and were recomputed.
    pub repaired: Vec<String>,
}

/// Pairwise distances persisted chunk by chunk. Completed chunks listed in
/// the store's manifest are reused; corrupt ones are reported, dropped and
/// recomputed; a hash mismatch aborts with [`DtwError::StaleCache`].
pub fn pairwise_matrix_checkpointed(
    ids: &[String],
    seqs: &[FeatureVectorSequence],
    normalize: bool,
    store: &CheckpointStore,
    opts: &RunOptions,
) -> Result<(DistanceMatrix, RunStats), DtwError> {
    check_inputs(ids, seqs)?;
    let pairs = canonical_pairs(seqs.len());
    let total = pairs.len() as u64;
    let mut stats = RunStats { pairs: pairs.len(), ..RunStats::default() };

    let mut done: Vec<Chunk> = Vec::new();
    for entry in store.manifest()? {
        let verified = store.read_chunk(&entry).and_then(|c| verify_pairs(&entry.file, c, &pairs));
        match verified {
            Ok(chunk) => done.push(chunk),
            Err(DtwError::CorruptChunk { chunk, reason }) => {
                log::warn!("checkpoint chunk {chunk} is corrupt ({reason}); recomputing it");
                store.forget(&entry.file)?;
                stats.repaired.push(chunk);
            }
            Err(e) => return Err(e),
        }
    }
    stats.chunks_reused = done.len();

    let covered: Vec<Range<u64>> = done.iter().map(|c| c.range.clone()).collect();
    let todo = missing_ranges(&covered, total, opts.chunk_size.max(1) as u64);

    let started = AtomicUsize::new(0);
    let written = AtomicUsize::new(0);
    let fresh: Vec<Option<Chunk>> = todo
        .par_iter()
        .map(|range| {
            let slot = started.fetch_add(1, Ordering::SeqCst);
            if opts.stop_after_chunks.is_some_and(|limit| slot >= limit) {
                return Ok(None);
            }
            let records = range
                .clone()
                .map(|k| {
                    let (i, j) = pairs[k as usize];
                    PairRecord { i, j, distance: pair_distance(seqs, (i, j), normalize) }
                })
                .collect();
            let chunk = Chunk { range: range.clone(), records };
            store.write_chunk(&chunk)?;
            let count = written.fetch_add(1, Ordering::SeqCst) + 1;
            if let Some(cb) = &opts.on_chunk_written {
                cb(count);
            }
            Ok(Some(chunk))
        })
        .collect::<Result<_, DtwError>>()?;

    stats.chunks_computed = fresh.iter().flatten().count();
    if fresh.iter().any(Option::is_none) {
        return Err(DtwError::Interrupted { completed: stats.chunks_reused + stats.chunks_computed });
    }
    done.extend(fresh.into_iter().flatten());
    done.sort_by_key(|c| c.range.start);

    let mut m = DistanceMatrix::zeros(ids.to_vec());
    for r in done.iter().flat_map(|c| &c.records) {
        m.set(r.i as usize, r.j as usize, r.distance);
    }
    Ok((m, stats))
}

fn verify_pairs(name: &str, chunk: Chunk, pairs: &[(u32, u32)]) -> Result<Chunk, DtwError> {
    let corrupt = |reason: String| DtwError::CorruptChunk { chunk: name.to_string(), reason };
    if chunk.range.end > pairs.len() as u64 {
        return Err(corrupt(format!("range {:?} exceeds {} pairs", chunk.range, pairs.len())));
    }
    for (k, r) in chunk.range.clone().zip(&chunk.records) {
        if pairs[k as usize] != (r.i, r.j) {
            return Err(corrupt(format!("record {k} holds pair ({}, {})", r.i, r.j)));
        }
        if !r.distance.is_finite() || r.distance < 0.0 {
            return Err(corrupt(format!("record {k} has distance {}", r.distance)));
        }
    }
    Ok(chunk)
}

/// Gaps in `[0, total)` not covered by `covered`, cut into pieces of at
/// most `size` aligned to multiples of `size`.
fn missing_ranges(covered: &[Range<u64>], total: u64, size: u64) -> Vec<Range<u64>> {
    let mut sorted = covered.to_vec();
    sorted.sort_by_key(|r| r.start);
    let mut gaps = Vec::new();
    let mut cursor = 0;
    for r in sorted.iter().chain(std::iter::once(&(total..total))) {
        if r.start > cursor {
            gaps.push(cursor..r.start);
        }
        cursor = cursor.max(r.end);
    }
    gaps.into_iter()
        .flat_map(|g| {
            let mut pieces = Vec::new();
            let mut s = g.start;
            while s < g.end {
                let e = ((s / size + 1) * size).min(g.end);
                pieces.push(s..e);
                s = e;
            }
            pieces
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtw::CHUNK_HEADER_LEN;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_corpus(n: usize, seed: u64) -> (Vec<String>, Vec<FeatureVectorSequence>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let seqs = (0..n)
            .map(|_| {
                let len = rng.random_range(2..9);
                FeatureVectorSequence {
                    frames: (0..len)
                        .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..1.0), rng.random()])
                        .collect(),
                }
            })
            .collect();
        ((0..n).map(|i| format!("s#{i}")).collect(), seqs)
    }

    fn store(dir: &std::path::Path) -> CheckpointStore {
        CheckpointStore::open(dir, [7; 32], [8; 32]).unwrap()
    }

    #[test]
    fn identical_pair_is_zero() {
        let s = FeatureVectorSequence { frames: vec![[1.0, 0.0, 0.5], [2.0, 1.0, 0.2]] };
        let m = pairwise_matrix(&["a".into(), "b".into()], &[s.clone(), s], true).unwrap();
        assert_eq!(m.rows(), vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn entries_equal_direct_calls() {
        let (ids, seqs) = random_corpus(3, 1);
        let m = pairwise_matrix(&ids, &seqs, true).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert_eq!(m.get(i, j), dtw(&seqs[i].frames, &seqs[j].frames, true).unwrap());
            assert_eq!(m.get(j, i), m.get(i, j));
        }
        m.validate().unwrap();
    }

    #[test]
    fn too_few_segments() {
        let (ids, seqs) = random_corpus(1, 1);
        assert!(matches!(pairwise_matrix(&ids, &seqs, true), Err(DtwError::TooFewSegments(1))));
    }

    #[test]
    fn interrupted_then_resumed_is_identical() {
        let (ids, seqs) = random_corpus(15, 2);
        let straight = pairwise_matrix(&ids, &seqs, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions { chunk_size: 10, ..RunOptions::default() };
        let total_chunks = pair_count(15).div_ceil(10);

        let half = RunOptions { stop_after_chunks: Some(total_chunks / 2), ..opts.clone() };
        let err = pairwise_matrix_checkpointed(&ids, &seqs, true, &store(dir.path()), &half).unwrap_err();
        assert!(matches!(err, DtwError::Interrupted { completed } if completed == total_chunks / 2));

        let (resumed, stats) = pairwise_matrix_checkpointed(&ids, &seqs, true, &store(dir.path()), &opts).unwrap();
        assert_eq!(stats.chunks_reused, total_chunks / 2);
        assert_eq!(stats.chunks_computed, total_chunks - total_chunks / 2);
        assert_eq!(resumed.to_csv(), straight.to_csv());

        let (again, stats) = pairwise_matrix_checkpointed(&ids, &seqs, true, &store(dir.path()), &opts).unwrap();
        assert_eq!(stats.chunks_computed, 0);
        assert_eq!(again, straight);
    }

    #[test]
    fn corrupt_chunk_is_named_and_only_it_recomputed() {
        let (ids, seqs) = random_corpus(10, 3);
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions { chunk_size: 8, ..RunOptions::default() };
        let (first, _) = pairwise_matrix_checkpointed(&ids, &seqs, true, &store(dir.path()), &opts).unwrap();

        let victim = dir.path().join(CheckpointStore::chunk_file_name(&(8..16)));
        let mut bytes = std::fs::read(&victim).unwrap();
        bytes[CHUNK_HEADER_LEN + 9] ^= 0x40;
        std::fs::write(&victim, bytes).unwrap();

        let (second, stats) = pairwise_matrix_checkpointed(&ids, &seqs, true, &store(dir.path()), &opts).unwrap();
        assert_eq!(stats.repaired, vec!["chunk-0000000008-0000000016.bin".to_string()]);
        assert_eq!(stats.chunks_computed, 1);
        assert_eq!(second, first);
    }

    #[test]
    fn stale_store_refuses_reuse() {
        let (ids, seqs) = random_corpus(5, 4);
        let dir = tempfile::tempdir().unwrap();
        pairwise_matrix_checkpointed(&ids, &seqs, true, &store(dir.path()), &RunOptions::default()).unwrap();
        let other = CheckpointStore::open(dir.path(), [7; 32], [0; 32]).unwrap();
        let r = pairwise_matrix_checkpointed(&ids, &seqs, true, &other, &RunOptions::default());
        assert!(matches!(r, Err(DtwError::StaleCache { .. })));
    }

    #[test]
    fn missing_ranges_fill_gaps() {
        assert_eq!(missing_ranges(&[], 10, 4), vec![0..4, 4..8, 8..10]);
        assert_eq!(missing_ranges(&[4..8], 10, 4), vec![0..4, 8..10]);
        assert_eq!(missing_ranges(&[0..4, 8..10], 10, 4), vec![4..8]);
    }

    proptest! {
        #[test]
        fn canonical_pairs_enumerate_upper_triangle(n in 0usize..30) {
            let pairs = canonical_pairs(n);
            prop_assert_eq!(pairs.len(), pair_count(n));
            prop_assert!(pairs.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(pairs.iter().all(|&(i, j)| i < j && (j as usize) < n));
        }

        #[test]
        fn matrix_is_symmetric_with_zero_diagonal(seed in 0u64..50, n in 2usize..7) {
            let (ids, seqs) = random_corpus(n, seed);
            let m = pairwise_matrix(&ids, &seqs, true).unwrap();
            prop_assert!(m.validate().is_ok());
        }
    }
}
