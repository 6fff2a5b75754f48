//! Stage execution with hash-chained caching.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::compute::{self, CorpusPiece, PairProjection};
use super::store::{self, Artifacts, DirLock, StageMeta};
use super::{io_err, PipelineConfig, PipelineError, Result, Stage};
use crate::analysis::{k_sweep, SimilarityReport};
use crate::annotate::CorpusStats;
use crate::dtw::{
    corpus_hash, pairwise_matrix_checkpointed, ChunkCallback, CheckpointStore, DistanceMatrix, FeatureConfig,
    PitchScaler, RunOptions,
};
use crate::embed::{EmbeddingSet, Graph2VecConfig};
use crate::graph::{from_json, to_dot, to_graphml, to_json, SegmentGraph};
use crate::hashing::{hash_json_hex, sha256_hex};
use crate::ingest::{matrix_to_csv, CorpusManifest};
use crate::segment::{listing, Segment};

const STAGE_VERSION: &str = "melograph-stage-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Inputs and config unchanged; nothing was done.
    Cached,
    Computed { duration_ms: u64 },
}

enum Freshness {
    Current(StageMeta),
    Missing,
    Stale(String),
}

/// One pipeline instance bound to an output directory, which it locks.
pub struct Pipeline {
    cfg: PipelineConfig,
    out: PathBuf,
    _lock: DirLock,
    chunk_hook: Option<ChunkCallback>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureRecord {
    ids: Vec<String>,
    scaler: PitchScaler,
    features: FeatureConfig,
    corpus_hash: String,
    feature_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GraphIndexEntry {
    piece_id: String,
    file: String,
    segments: usize,
    /// k used per level after clamping to `segments - 1`.
    effective_k: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GraphIndex {
    k_levels: Vec<usize>,
    pieces: Vec<GraphIndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EmbedRecord {
    piece_ids: Vec<String>,
    groups: Vec<String>,
    vectors: Vec<Vec<f64>>,
    pca_points: Vec<[f64; 2]>,
    explained_variance: [f64; 2],
    epoch_loss: Vec<f64>,
    graph2vec: Graph2VecConfig,
    wl_iterations: usize,
    k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct ClusterSummary {
    pub k: usize,
    pub seed: u64,
    pub adjusted_rand_index: f64,
    pub inertia: f64,
    pub iterations: usize,
}

/// A file-system-safe stem for a piece id.
pub(crate) fn file_stem(piece_id: &str) -> String {
    piece_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn k_dir(k: usize) -> String {
    format!("k{k:02}")
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

impl Pipeline {
    /// Validates the config and takes the output-directory lock.
    pub fn open(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let out = cfg.output_dir.clone();
        let lock = DirLock::acquire(&out)?;
        Ok(Pipeline { cfg, out, _lock: lock, chunk_hook: None })
    }

    /// Called after each DTW checkpoint chunk is persisted.
    pub fn with_chunk_hook(mut self, hook: ChunkCallback) -> Self {
        self.chunk_hook = Some(hook);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        store::stage_dir(&self.out, stage)
    }

    pub fn checkpoint_root(&self) -> PathBuf {
        self.out.join("checkpoints")
    }

    pub fn meta(&self, stage: Stage) -> Result<Option<StageMeta>> {
        store::read_meta(&self.out, stage)
    }

    fn stage_config(&self, stage: Stage) -> serde_json::Value {
        let c = &self.cfg;
        match stage {
            Stage::Ingest => json!({ "melody": c.melody }),
            Stage::Annotate => json!({}),
            Stage::Segment => json!({ "segmenter": c.segmenter }),
            Stage::Dtw => json!({ "features": c.features }),
            Stage::Graph => json!({ "k_min": c.k_min, "k_max": c.k_max }),
            Stage::Sweep => json!({ "wl_iterations": c.wl_iterations, "kl_seed": c.kl_seed }),
            Stage::Heatmap => json!({ "k": c.k, "wl_iterations": c.wl_iterations }),
            Stage::Mds => json!({ "k": c.k, "wl_iterations": c.wl_iterations, "mds_knn": c.mds_knn }),
            Stage::Embed => json!({ "k": c.k, "wl_iterations": c.wl_iterations, "graph2vec": c.graph2vec }),
            Stage::Cluster => json!({ "clusters": c.clusters, "kmeans_seed": c.kmeans_seed }),
        }
    }

    pub fn config_hash(&self, stage: Stage) -> String {
        hash_json_hex(&json!({ "version": STAGE_VERSION, "stage": stage.name(), "config": self.stage_config(stage) }))
    }

    /// Hashes of the manifest and every score it lists.
    fn source_inputs(&self) -> Result<BTreeMap<String, String>> {
        let path = &self.cfg.manifest;
        let manifest = CorpusManifest::load(path)?;
        let mut inputs = BTreeMap::new();
        inputs.insert("manifest".to_string(), sha256_hex(&std::fs::read(path).map_err(io_err(path))?));
        for entry in &manifest.pieces {
            let file = manifest.resolve(path, entry);
            let bytes = std::fs::read(&file).map_err(io_err(&file))?;
            inputs.insert(format!("score:{}", entry.piece_id), sha256_hex(&bytes));
        }
        Ok(inputs)
    }

    /// Output hashes of every dependency, which must all be current.
    fn inputs(&self, stage: Stage) -> Result<BTreeMap<String, String>> {
        if stage == Stage::Ingest {
            return self.source_inputs();
        }
        let mut inputs = BTreeMap::new();
        // report the nearest missing stage before recursing into its own inputs
        if let Some(&dep) = stage.dependencies().iter().find(|&&d| !store::stage_dir(&self.out, d).join(store::META_FILE).exists()) {
            return Err(PipelineError::MissingStage { stage: dep, needed_by: stage });
        }
        for &dep in stage.dependencies() {
            match self.freshness(dep)? {
                Freshness::Current(meta) => {
                    inputs.insert(dep.name().to_string(), meta.output_hash);
                }
                Freshness::Missing => return Err(PipelineError::MissingStage { stage: dep, needed_by: stage }),
                Freshness::Stale(reason) => return Err(PipelineError::StaleStage { stage: dep, reason }),
            }
        }
        Ok(inputs)
    }

    fn judge(&self, stage: Stage, inputs: &BTreeMap<String, String>) -> Result<Freshness> {
        let Some(meta) = store::read_meta(&self.out, stage)? else { return Ok(Freshness::Missing) };
        if meta.config_hash != self.config_hash(stage) {
            return Ok(Freshness::Stale("its configuration changed".into()));
        }
        if let Some(changed) = meta.inputs.iter().find(|(k, v)| inputs.get(*k) != Some(*v)).map(|(k, _)| k.clone())
        {
            return Ok(Freshness::Stale(format!("input `{changed}` changed")));
        }
        if let Some(extra) = inputs.keys().find(|k| !meta.inputs.contains_key(*k)) {
            return Ok(Freshness::Stale(format!("input `{extra}` is new")));
        }
        if let Some(file) = store::modified_artifact(&self.out, &meta) {
            return Ok(Freshness::Stale(format!("artifact `{file}` was modified or removed")));
        }
        Ok(Freshness::Current(meta))
    }

    fn freshness(&self, stage: Stage) -> Result<Freshness> {
        let inputs = self.inputs(stage)?;
        self.judge(stage, &inputs)
    }

    /// Whether the stage's artifacts match the current config and inputs.
    pub fn is_current(&self, stage: Stage) -> Result<bool> {
        Ok(matches!(self.freshness(stage)?, Freshness::Current(_)))
    }

    /// Runs one stage unless its cached output is current. Upstream stages
    /// must already be current.
    pub fn run_stage(&self, stage: Stage) -> Result<Outcome> {
        let inputs = self.inputs(stage)?;
        if let Freshness::Current(_) = self.judge(stage, &inputs)? {
            log::info!("{stage}: cache hit");
            return Ok(Outcome::Cached);
        }
        let started = Instant::now();
        let (artifacts, details) = self.compute(stage)?;
        let duration_ms = started.elapsed().as_millis() as u64;
        let outputs = artifacts.hashes();
        let meta = StageMeta {
            stage,
            config_hash: self.config_hash(stage),
            inputs,
            output_hash: store::output_hash(&outputs),
            outputs,
            duration_ms,
            details,
        };
        store::commit(&self.out, &meta, &artifacts)?;
        log::info!("{stage}: done in {duration_ms} ms");
        Ok(Outcome::Computed { duration_ms })
    }

    /// Every stage in dependency order.
    pub fn run_all(&self) -> Result<Vec<(Stage, Outcome)>> {
        Stage::ALL.into_iter().map(|s| Ok((s, self.run_stage(s)?))).collect()
    }

    fn compute(&self, stage: Stage) -> Result<(Artifacts, serde_json::Value)> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Annotate => self.annotate(),
            Stage::Segment => self.segment(),
            Stage::Dtw => self.dtw(),
            Stage::Graph => self.graph(),
            Stage::Sweep => self.sweep(),
            Stage::Heatmap => self.heatmap(),
            Stage::Mds => self.mds(),
            Stage::Embed => self.embed(),
            Stage::Cluster => self.cluster(),
        }
    }

    pub(crate) fn load_pieces(&self, stage: Stage) -> Result<Vec<CorpusPiece>> {
        store::read_json(&self.out, stage, "pieces.json")
    }

    fn load_segments(&self) -> Result<Vec<Vec<Segment>>> {
        store::read_json(&self.out, Stage::Segment, "segments.json")
    }

    fn load_distances(&self) -> Result<DistanceMatrix> {
        let bytes = store::read_artifact(&self.out, Stage::Dtw, "distances.csv")?;
        Ok(DistanceMatrix::from_csv(&String::from_utf8_lossy(&bytes))?)
    }

    fn load_graphs(&self, k: usize) -> Result<Vec<SegmentGraph>> {
        let index: GraphIndex = store::read_json(&self.out, Stage::Graph, "index.json")?;
        index
            .pieces
            .iter()
            .map(|p| {
                let rel = format!("{}/{}.json", k_dir(k), p.file);
                let bytes = store::read_artifact(&self.out, Stage::Graph, &rel)?;
                Ok(from_json(&String::from_utf8_lossy(&bytes))?)
            })
            .collect()
    }

    pub(crate) fn load_sweep(&self) -> Result<SimilarityReport> {
        store::read_json(&self.out, Stage::Sweep, "report.json")
    }

    pub(crate) fn load_heatmaps(&self) -> Result<crate::analysis::Heatmaps> {
        store::read_json(&self.out, Stage::Heatmap, "heatmaps.json")
    }

    pub(crate) fn load_embedding_set(&self) -> Result<EmbeddingSet> {
        store::read_json(&self.out, Stage::Cluster, "embedding.json")
    }

    pub(crate) fn load_cluster_summary(&self) -> Result<ClusterSummary> {
        store::read_json(&self.out, Stage::Cluster, "summary.json")
    }

    fn piece_files(pieces: &[CorpusPiece]) -> Result<Vec<String>> {
        let files: Vec<String> = pieces.iter().map(|p| file_stem(&p.piece_id)).collect();
        let mut seen = HashSet::new();
        for (f, p) in files.iter().zip(pieces) {
            if !seen.insert(f.as_str()) {
                return Err(PipelineError::Config(format!(
                    "piece id `{}` collides with another after file-name sanitizing",
                    p.piece_id
                )));
            }
        }
        Ok(files)
    }

    fn matrices(pieces: &[CorpusPiece], artifacts: &mut Artifacts) -> Result<()> {
        for (p, file) in pieces.iter().zip(Self::piece_files(pieces)?) {
            artifacts.add(format!("csv/{file}.csv"), matrix_to_csv(&p.matrix));
        }
        artifacts.add_json("pieces.json", &pieces);
        Ok(())
    }

    fn ingest(&self) -> Result<(Artifacts, serde_json::Value)> {
        let pieces = compute::ingest_corpus(&self.cfg.manifest, self.cfg.melody.as_ref())?;
        let mut a = Artifacts::default();
        Self::matrices(&pieces, &mut a)?;
        let notes: usize = pieces.iter().map(|p| p.matrix.len()).sum();
        Ok((a, json!({ "pieces": pieces.len(), "notes": notes })))
    }

    fn annotate(&self) -> Result<(Artifacts, serde_json::Value)> {
        let (pieces, stats) = compute::annotate_corpus(&self.load_pieces(Stage::Ingest)?);
        let mut a = Artifacts::default();
        Self::matrices(&pieces, &mut a)?;
        a.add_json("stats.json", &stats);
        Ok((a, json!({ "degenerate_stats": stats.is_degenerate() })))
    }

    fn segment(&self) -> Result<(Artifacts, serde_json::Value)> {
        let pieces = self.load_pieces(Stage::Annotate)?;
        let stats: CorpusStats = store::read_json(&self.out, Stage::Annotate, "stats.json")?;
        let segments = compute::segment_corpus(&pieces, &stats, &self.cfg.segmenter);
        let mut a = Artifacts::default();
        for (segs, file) in segments.iter().zip(Self::piece_files(&pieces)?) {
            a.add_json(format!("listings/{file}.json"), &listing(segs));
        }
        a.add_json("segments.json", &segments);
        let counts: Vec<usize> = segments.iter().map(Vec::len).collect();
        Ok((a, json!({ "segments_per_piece": counts })))
    }

    fn dtw(&self) -> Result<(Artifacts, serde_json::Value)> {
        let segments = self.load_segments()?;
        let (ids, seqs, scaler) = compute::corpus_features(&segments, &self.cfg.features);
        let corpus = corpus_hash(&ids, &seqs);
        let feature = self.cfg.features.hash(&scaler);
        let key = &hash_json_hex(&(hex::encode(corpus), hex::encode(feature)))[..16];
        let dir = self.checkpoint_root().join(format!("dtw-{key}"));
        let checkpoints = CheckpointStore::open(&dir, corpus, feature)?;
        let opts = RunOptions {
            chunk_size: self.cfg.dtw.chunk_size,
            stop_after_chunks: None,
            on_chunk_written: self.chunk_hook.clone(),
        };
        let (matrix, stats) =
            pairwise_matrix_checkpointed(&ids, &seqs, self.cfg.features.normalize_path, &checkpoints, &opts)?;
        std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        let mut a = Artifacts::default();
        a.add("distances.csv", matrix.to_csv());
        a.add_json(
            "features.json",
            &FeatureRecord {
                ids,
                scaler,
                features: self.cfg.features.clone(),
                corpus_hash: hex::encode(corpus),
                feature_hash: hex::encode(feature),
            },
        );
        Ok((a, serde_json::to_value(&stats).expect("stats serialize")))
    }

    fn graph(&self) -> Result<(Artifacts, serde_json::Value)> {
        let segments = self.load_segments()?;
        let distances = self.load_distances()?;
        let levels = self.cfg.k_levels();
        let mut a = Artifacts::default();
        let ids: Vec<String> = segments.iter().map(|s| s.first().map(|x| x.id.piece_id.clone()).unwrap_or_default()).collect();
        let mut seen = HashSet::new();
        let files: Vec<String> = ids.iter().map(|id| file_stem(id)).collect();
        if let Some(dup) = files.iter().find(|f| !seen.insert(f.as_str())) {
            return Err(PipelineError::Config(format!("two pieces map to the file name `{dup}`")));
        }
        for &k in &levels {
            for (g, file) in compute::piece_graphs(&distances, &segments, k)?.iter().zip(&files) {
                let base = format!("{}/{file}", k_dir(k));
                a.add(format!("{base}.json"), to_json(g));
                a.add(format!("{base}.graphml"), to_graphml(g));
                a.add(format!("{base}.dot"), to_dot(g));
            }
        }
        let pieces: Vec<GraphIndexEntry> = ids
            .iter()
            .zip(&files)
            .zip(&segments)
            .map(|((id, file), segs)| GraphIndexEntry {
                piece_id: id.clone(),
                file: file.clone(),
                segments: segs.len(),
                effective_k: levels.iter().map(|&k| compute::effective_k(k, segs.len())).collect(),
            })
            .collect();
        let clamped: Vec<String> = pieces
            .iter()
            .filter(|p| p.effective_k.iter().zip(&levels).any(|(e, k)| e != k))
            .map(|p| p.piece_id.clone())
            .collect();
        for id in &clamped {
            log::warn!("piece `{id}` has too few segments for the largest k; its k was clamped");
        }
        a.add_json("index.json", &GraphIndex { k_levels: levels, pieces });
        Ok((a, json!({ "clamped_pieces": clamped })))
    }

    fn sweep(&self) -> Result<(Artifacts, serde_json::Value)> {
        let levels = self
            .cfg
            .k_levels()
            .into_iter()
            .map(|k| Ok((k, self.load_graphs(k)?)))
            .collect::<Result<Vec<_>>>()?;
        let report = k_sweep(&levels, self.cfg.wl_iterations, self.cfg.kl_seed)?;
        let mut a = Artifacts::default();
        a.add("sweep.csv", report.to_csv());
        a.add_json("report.json", &report);
        Ok((a, serde_json::Value::Null))
    }

    fn heatmap(&self) -> Result<(Artifacts, serde_json::Value)> {
        let pieces = self.load_pieces(Stage::Ingest)?;
        let groups: Vec<String> = pieces.iter().map(|p| p.group.clone()).collect();
        let graphs = self.load_graphs(self.cfg.k)?;
        let maps = compute::heatmaps(&graphs, &groups, self.cfg.wl_iterations)?;
        let mut a = Artifacts::default();
        a.add("piecewise.csv", maps.piecewise_csv());
        a.add("groups.csv", maps.group_csv());
        a.add_json("heatmaps.json", &maps);
        Ok((a, serde_json::Value::Null))
    }

    fn mds(&self) -> Result<(Artifacts, serde_json::Value)> {
        use rayon::prelude::*;
        let segments = self.load_segments()?;
        let distances = self.load_distances()?;
        let graphs = self.load_graphs(self.cfg.k)?;
        let (h, knn) = (self.cfg.wl_iterations, self.cfg.mds_knn);
        let projections = compute::all_pairs(graphs.len())
            .par_iter()
            .map(|&pair| compute::pair_projection(&distances, &segments, &graphs, pair, h, knn))
            .collect::<Result<Vec<PairProjection>>>()?;
        let pairs = csv_text(
            &["piece_a", "piece_b", "wl_similarity", "stress", "silhouette", "knn_accuracy"],
            projections.iter().map(|p| {
                vec![
                    p.piece_a.clone(),
                    p.piece_b.clone(),
                    p.wl_similarity.to_string(),
                    p.mds.stress.to_string(),
                    p.mds.silhouette_mean.to_string(),
                    p.mds.knn_accuracy.to_string(),
                ]
            }),
        );
        let points = csv_text(
            &["piece_a", "piece_b", "segment", "piece", "x", "y", "silhouette", "knn_accuracy"],
            projections.iter().flat_map(|p| {
                p.mds.ids.iter().zip(&p.mds.labels).zip(&p.mds.points).map(move |((id, &l), pt)| {
                    vec![
                        p.piece_a.clone(),
                        p.piece_b.clone(),
                        id.clone(),
                        if l == 0 { p.piece_a.clone() } else { p.piece_b.clone() },
                        pt[0].to_string(),
                        pt[1].to_string(),
                        p.mds.silhouette_mean.to_string(),
                        p.mds.knn_accuracy.to_string(),
                    ]
                })
            }),
        );
        let mut a = Artifacts::default();
        a.add("pairs.csv", pairs);
        a.add("points.csv", points);
        a.add_json("projections.json", &projections);
        Ok((a, serde_json::Value::Null))
    }

    fn embed(&self) -> Result<(Artifacts, serde_json::Value)> {
        let pieces = self.load_pieces(Stage::Ingest)?;
        let graphs = self.load_graphs(self.cfg.k)?;
        let (vectors, epoch_loss, pca) = compute::embed_graphs(&graphs, self.cfg.wl_iterations, &self.cfg.graph2vec)?;
        let record = EmbedRecord {
            piece_ids: pieces.iter().map(|p| p.piece_id.clone()).collect(),
            groups: pieces.iter().map(|p| p.group.clone()).collect(),
            vectors,
            pca_points: pca.points,
            explained_variance: pca.explained_variance,
            epoch_loss,
            graph2vec: self.cfg.graph2vec.clone(),
            wl_iterations: self.cfg.wl_iterations,
            k: self.cfg.k,
        };
        let dim = self.cfg.graph2vec.dim;
        let mut header = vec!["piece".to_string(), "group".to_string()];
        header.extend((0..dim).map(|i| format!("v{i}")));
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let vectors_csv = csv_text(
            &header_refs,
            record.piece_ids.iter().zip(&record.groups).zip(&record.vectors).map(|((p, g), v)| {
                let mut row = vec![p.clone(), g.clone()];
                row.extend(v.iter().map(f64::to_string));
                row
            }),
        );
        let pca_csv = csv_text(
            &["piece", "group", "x", "y"],
            record.piece_ids.iter().zip(&record.groups).zip(&record.pca_points).map(|((p, g), pt)| {
                vec![p.clone(), g.clone(), pt[0].to_string(), pt[1].to_string()]
            }),
        );
        let mut a = Artifacts::default();
        a.add("vectors.csv", vectors_csv);
        a.add("pca.csv", pca_csv);
        a.add_json("embedding.json", &record);
        Ok((a, serde_json::Value::Null))
    }

    fn cluster(&self) -> Result<(Artifacts, serde_json::Value)> {
        let pieces = self.load_pieces(Stage::Ingest)?;
        let record: EmbedRecord = store::read_json(&self.out, Stage::Embed, "embedding.json")?;
        let k = self.cfg.clusters.unwrap_or_else(|| compute::distinct_groups(&record.groups));
        let (fit, ari) = compute::cluster_vectors(&record.vectors, &record.groups, k, self.cfg.kmeans_seed)?;
        let table = csv_text(
            &["composer", "piece", "label"],
            pieces.iter().zip(&fit.labels).map(|(p, l)| vec![p.composer.clone(), p.piece_id.clone(), l.to_string()]),
        );
        let set = EmbeddingSet {
            piece_ids: record.piece_ids,
            groups: record.groups,
            vectors: record.vectors,
            cluster_labels: fit.labels.clone(),
            pca_points: record.pca_points,
            epoch_loss: record.epoch_loss,
        };
        let summary = ClusterSummary {
            k,
            seed: self.cfg.kmeans_seed,
            adjusted_rand_index: ari,
            inertia: fit.inertia(),
            iterations: fit.iterations,
        };
        let mut a = Artifacts::default();
        a.add("clusters.csv", table);
        a.add_json("embedding.json", &set);
        a.add_json("summary.json", &summary);
        Ok((a, serde_json::Value::Null))
    }
}
