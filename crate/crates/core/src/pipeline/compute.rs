//! Stage computations on in-memory values, free of any file layout.

use std::path::Path;

use crate::analysis::{corpus_heatmaps, k_sweep, wl_kernel, Heatmaps, SimilarityReport};
use crate::annotate::{annotate, CorpusStats};
use crate::dtw::{segment_features, DistanceMatrix, FeatureConfig, FeatureVectorSequence, PitchScaler};
use crate::embed::{
    adjusted_rand_index, graph2vec_train, joint_segment_mds, kmeans, pca_2d, wl_document, Graph2VecConfig,
    KMeansResult, MdsResult, Pca2,
};
use crate::graph::{annotations_for, knn_graph, label_nodes, SegmentGraph};
use crate::ingest::{parse_score, CorpusManifest, IngestError, MelodyRule, NoteMatrix};
use crate::segment::{assign_bins, segment_piece, Segment, SegmenterConfig};

use super::PipelineError;

/// One ingested piece with its manifest metadata.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorpusPiece {
    pub piece_id: String,
    pub composer: String,
    pub group: String,
    pub matrix: NoteMatrix,
}

/// Parses every manifest entry. `melody` overrides the per-entry rule.
pub fn ingest_corpus(manifest_path: &Path, melody: Option<&MelodyRule>) -> Result<Vec<CorpusPiece>, PipelineError> {
    let manifest = CorpusManifest::load(manifest_path)?;
    manifest
        .pieces
        .iter()
        .map(|entry| {
            let path = manifest.resolve(manifest_path, entry);
            let text = std::fs::read_to_string(&path)
                .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
            let rule = melody.unwrap_or(&entry.melody);
            let matrix = parse_score(&text)
                .and_then(|s| s.select(rule, &entry.piece_id, &entry.composer))
                .map_err(|e| PipelineError::Piece { piece: entry.piece_id.clone(), source: e })?;
            Ok(CorpusPiece {
                piece_id: entry.piece_id.clone(),
                composer: entry.composer.clone(),
                group: entry.group().to_string(),
                matrix,
            })
        })
        .collect()
}

pub fn annotate_corpus(pieces: &[CorpusPiece]) -> (Vec<CorpusPiece>, CorpusStats) {
    let annotated: Vec<CorpusPiece> =
        pieces.iter().map(|p| CorpusPiece { matrix: annotate(&p.matrix), ..p.clone() }).collect();
    let stats = CorpusStats::from_matrices(annotated.iter().map(|p| &p.matrix));
    (annotated, stats)
}

/// Segments every piece, then bins expectancy over the whole corpus.
pub fn segment_corpus(pieces: &[CorpusPiece], stats: &CorpusStats, cfg: &SegmenterConfig) -> Vec<Vec<Segment>> {
    let mut segments: Vec<Vec<Segment>> = pieces.iter().map(|p| segment_piece(&p.matrix, stats, cfg)).collect();
    assign_bins(&mut segments);
    segments
}

/// Flattened segment ids and feature sequences in corpus order.
pub fn corpus_features(
    segments: &[Vec<Segment>],
    cfg: &FeatureConfig,
) -> (Vec<String>, Vec<FeatureVectorSequence>, PitchScaler) {
    let scaler = PitchScaler::fit(segments.iter().flatten());
    let ids = segments.iter().flatten().map(|s| s.id.to_string()).collect();
    let seqs = segments.iter().flatten().map(|s| segment_features(s, &scaler, cfg)).collect();
    (ids, seqs, scaler)
}

/// Index ranges of each piece's segments within the corpus ordering.
pub fn piece_offsets(segments: &[Vec<Segment>]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    segments
        .iter()
        .map(|s| {
            let r = start..start + s.len();
            start = r.end;
            r
        })
        .collect()
}

/// The k actually used for a piece with `n` segments.
pub fn effective_k(k: usize, n: usize) -> usize {
    k.min(n.saturating_sub(1)).max(1)
}

/// Labeled k-NN graph per piece, cut from the corpus distance matrix.
pub fn piece_graphs(
    corpus: &DistanceMatrix,
    segments: &[Vec<Segment>],
    k: usize,
) -> Result<Vec<SegmentGraph>, PipelineError> {
    piece_offsets(segments)
        .into_iter()
        .zip(segments)
        .map(|(range, segs)| {
            let piece_id = segs.first().map(|s| s.id.piece_id.clone()).unwrap_or_default();
            if segs.len() < 2 {
                return Err(PipelineError::TooFewSegments { piece: piece_id, n: segs.len() });
            }
            let indices: Vec<usize> = range.collect();
            let sub = corpus.select(&indices);
            let g = knn_graph(&sub, &piece_id, effective_k(k, segs.len()))?;
            Ok(label_nodes(g, &annotations_for(segs))?)
        })
        .collect()
}

pub fn sweep(
    corpus: &DistanceMatrix,
    segments: &[Vec<Segment>],
    ks: &[usize],
    h: usize,
    seed: u64,
) -> Result<SimilarityReport, PipelineError> {
    let levels = ks
        .iter()
        .map(|&k| Ok((k, piece_graphs(corpus, segments, k)?)))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(k_sweep(&levels, h, seed)?)
}

pub fn heatmaps(graphs: &[SegmentGraph], groups: &[String], h: usize) -> Result<Heatmaps, PipelineError> {
    Ok(corpus_heatmaps(graphs, groups, h)?)
}

/// Joint segment MDS for one pair of pieces, with their WL similarity.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PairProjection {
    pub piece_a: String,
    pub piece_b: String,
    pub wl_similarity: f64,
    pub mds: MdsResult,
}

pub fn pair_projection(
    corpus: &DistanceMatrix,
    segments: &[Vec<Segment>],
    graphs: &[SegmentGraph],
    (a, b): (usize, usize),
    h: usize,
    knn_k: usize,
) -> Result<PairProjection, PipelineError> {
    let offsets = piece_offsets(segments);
    let indices: Vec<usize> = offsets[a].clone().chain(offsets[b].clone()).collect();
    let labels: Vec<usize> = offsets[a].clone().map(|_| 0).chain(offsets[b].clone().map(|_| 1)).collect();
    let mds = joint_segment_mds(&corpus.select(&indices), &labels, knn_k)?;
    Ok(PairProjection {
        piece_a: graphs[a].piece_id.clone(),
        piece_b: graphs[b].piece_id.clone(),
        wl_similarity: wl_kernel(&graphs[a], &graphs[b], h)?,
        mds,
    })
}

pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Graph vectors, per-epoch loss and the PCA projection.
pub type Embedding = (Vec<Vec<f64>>, Vec<f64>, Pca2);

/// graph2vec vectors and their PCA projection.
pub fn embed_graphs(
    graphs: &[SegmentGraph],
    h: usize,
    cfg: &Graph2VecConfig,
) -> Result<Embedding, PipelineError> {
    let docs = graphs.iter().map(|g| wl_document(g, h)).collect::<Result<Vec<_>, _>>()?;
    let model = graph2vec_train(&docs, cfg)?;
    let pca = pca_2d(&model.vectors)?;
    Ok((model.vectors, model.epoch_loss, pca))
}

/// k-means over the vectors; returns the fit and its ARI against `groups`.
pub fn cluster_vectors(
    vectors: &[Vec<f64>],
    groups: &[String],
    k: usize,
    seed: u64,
) -> Result<(KMeansResult, f64), PipelineError> {
    let fit = kmeans(vectors, k, seed)?;
    let truth = group_indices(groups);
    let ari = adjusted_rand_index(&fit.labels, &truth);
    Ok((fit, ari))
}

/// Group names mapped to integers in order of first appearance.
pub fn group_indices(groups: &[String]) -> Vec<usize> {
    let mut names: Vec<&String> = Vec::new();
    groups
        .iter()
        .map(|g| match names.iter().position(|n| *n == g) {
            Some(i) => i,
            None => {
                names.push(g);
                names.len() - 1
            }
        })
        .collect()
}

pub fn distinct_groups(groups: &[String]) -> usize {
    group_indices(groups).into_iter().max().map_or(0, |m| m + 1)
}
