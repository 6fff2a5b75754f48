//! Staged, hash-chained orchestration of the whole analysis.

pub mod compute;
mod report;
mod stages;
mod store;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AnalysisError, MAX_WL_ITERATIONS};
use crate::dtw::{DtwError, FeatureConfig};
use crate::embed::{EmbedError, Graph2VecConfig};
use crate::graph::GraphError;
use crate::ingest::{IngestError, MelodyRule};
use crate::segment::SegmenterConfig;

pub use self::report::{render, report, Summary};
pub use self::stages::{Outcome, Pipeline};
pub use self::store::StageMeta;

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error("piece `{piece}`: {source}")]
    Piece {
        piece: String,
        #[source]
        source: IngestError,
    },

    #[error(transparent)]
    Dtw(#[from] DtwError),

    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error(transparent)]
    Analysis(#[from] AnalysisError),

    #[error(transparent)]
    Embed(#[from] EmbedError),

    #[error("piece `{piece}` has {n} segments; a graph needs at least 2")]
    TooFewSegments { piece: String, n: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{needed_by}` needs the output of `{stage}`; run `melograph {stage} --config <path>` first")]
    MissingStage { stage: Stage, needed_by: Stage },

    #[error("stage `{stage}` is out of date ({reason}); rerun `melograph {stage} --config <path>`")]
    StaleStage { stage: Stage, reason: String },

    #[error("output directory {0} is in use by another melograph process")]
    Locked(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read {path}: {message}")]
    Decode { path: String, message: String },
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Annotate,
    Segment,
    Dtw,
    Graph,
    Sweep,
    Heatmap,
    Mds,
    Embed,
    Cluster,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Annotate,
        Stage::Segment,
        Stage::Dtw,
        Stage::Graph,
        Stage::Sweep,
        Stage::Heatmap,
        Stage::Mds,
        Stage::Embed,
        Stage::Cluster,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Annotate => "annotate",
            Stage::Segment => "segment",
            Stage::Dtw => "dtw",
            Stage::Graph => "graph",
            Stage::Sweep => "sweep",
            Stage::Heatmap => "heatmap",
            Stage::Mds => "mds",
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
        }
    }

    /// Stages whose artifacts this stage reads.
    pub fn dependencies(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Annotate => &[Stage::Ingest],
            Stage::Segment => &[Stage::Annotate],
            Stage::Dtw => &[Stage::Segment],
            Stage::Graph => &[Stage::Segment, Stage::Dtw],
            Stage::Sweep => &[Stage::Graph],
            Stage::Heatmap => &[Stage::Ingest, Stage::Graph],
            Stage::Mds => &[Stage::Segment, Stage::Dtw, Stage::Graph],
            Stage::Embed => &[Stage::Ingest, Stage::Graph],
            Stage::Cluster => &[Stage::Ingest, Stage::Embed],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtwSettings {
    /// Pairs per checkpoint chunk.
    pub chunk_size: usize,
}

impl Default for DtwSettings {
    fn default() -> Self {
        DtwSettings { chunk_size: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Corpus manifest; relative paths resolve against the config file.
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    /// Overrides every manifest entry's melody rule when set.
    pub melody: Option<MelodyRule>,
    pub segmenter: SegmenterConfig,
    pub features: FeatureConfig,
    pub dtw: DtwSettings,
    pub k_min: usize,
    pub k_max: usize,
    /// Operating k for heatmaps, projections and embeddings.
    pub k: usize,
    pub wl_iterations: usize,
    pub kl_seed: u64,
    /// Neighbours for the leave-one-out accuracy of joint projections.
    pub mds_knn: usize,
    pub graph2vec: Graph2VecConfig,
    /// Cluster count; defaults to the number of manifest groups.
    pub clusters: Option<usize>,
    pub kmeans_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            manifest: PathBuf::from("manifest.toml"),
            output_dir: PathBuf::from("out"),
            melody: None,
            segmenter: SegmenterConfig::default(),
            features: FeatureConfig::default(),
            dtw: DtwSettings::default(),
            k_min: 2,
            k_max: 12,
            k: 8,
            wl_iterations: 3,
            kl_seed: 0,
            mds_knn: 1,
            graph2vec: Graph2VecConfig::default(),
            clusters: None,
            kmeans_seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML config and resolves its paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.manifest = base.join(&cfg.manifest);
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.k_min == 0 || self.k_min > self.k_max {
            return bad(format!("k range {}..{} is empty or starts at 0", self.k_min, self.k_max));
        }
        if !(self.k_min..=self.k_max).contains(&self.k) {
            return bad(format!("operating k {} lies outside {}..{}", self.k, self.k_min, self.k_max));
        }
        if self.wl_iterations > MAX_WL_ITERATIONS {
            return bad(format!("wl_iterations must be at most {MAX_WL_ITERATIONS}"));
        }
        if self.dtw.chunk_size == 0 {
            return bad("dtw.chunk_size must be positive".into());
        }
        if self.mds_knn == 0 {
            return bad("mds_knn must be positive".into());
        }
        if self.segmenter.min_notes == 0 {
            return bad("segmenter.min_notes must be positive".into());
        }
        if self.graph2vec.dim == 0 || self.graph2vec.epochs == 0 {
            return bad("graph2vec.dim and graph2vec.epochs must be positive".into());
        }
        if self.clusters == Some(0) {
            return bad("clusters must be positive".into());
        }
        Ok(())
    }

    pub fn k_levels(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_span_eleven_levels() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.k_levels(), (2..=12).collect::<Vec<_>>());
    }

    #[test]
    fn operating_k_must_lie_in_range() {
        let cfg = PipelineConfig { k: 13, ..PipelineConfig::default() };
        assert!(matches!(cfg.validate(), Err(PipelineError::Config(_))));
    }

    #[test]
    fn toml_round_trip_and_path_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("melograph.toml");
        std::fs::write(&path, "manifest = \"corpus/m.toml\"\nk = 4\n[graph2vec]\ndim = 16\n").unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.graph2vec.dim, 16);
        assert_eq!(cfg.graph2vec.epochs, 50);
        assert_eq!(cfg.manifest, dir.path().join("corpus/m.toml"));
        let again: PipelineConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("k_sweep = 3\n").is_err());
    }

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
            assert!(s.dependencies().iter().all(|d| *d < s));
        }
    }
}
