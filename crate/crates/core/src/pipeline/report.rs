//! Run summary assembled from the stage artifacts.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::stages::Pipeline;
use super::{io_err, PipelineError, Result, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub k: usize,
    pub mean_intra: f64,
    pub mean_inter: f64,
    /// `None` when the effect size is infinite.
    pub cohens_d: Option<f64>,
    pub auc: f64,
    pub p_raw: f64,
    pub p_fdr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub composer: String,
    pub piece: String,
    pub group: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub operating_k: usize,
    pub wl_iterations: usize,
    pub levels: Vec<LevelSummary>,
    pub groups: Vec<String>,
    pub group_heatmap: Vec<Vec<Option<f64>>>,
    pub clusters: Vec<ClusterRow>,
    pub cluster_count: usize,
    pub adjusted_rand_index: f64,
}

/// Writes `report/summary.json` and `report/summary.txt`. Needs current
/// sweep, heatmap and cluster stages.
pub fn report(p: &Pipeline) -> Result<Summary> {
    for stage in [Stage::Sweep, Stage::Heatmap, Stage::Cluster] {
        if !p.is_current(stage)? {
            let reason = if p.meta(stage)?.is_some() { "its inputs or configuration changed" } else { "it has not run" };
            return Err(PipelineError::StaleStage { stage, reason: reason.into() });
        }
    }
    let sweep = p.load_sweep()?;
    let heat = p.load_heatmaps()?;
    let set = p.load_embedding_set()?;
    let cluster = p.load_cluster_summary()?;
    let pieces = p.load_pieces(Stage::Ingest)?;

    let summary = Summary {
        operating_k: p.config().k,
        wl_iterations: sweep.h,
        levels: sweep
            .levels
            .iter()
            .map(|l| LevelSummary {
                k: l.k,
                mean_intra: l.mean_intra,
                mean_inter: l.mean_inter,
                cohens_d: l.cohens_d.is_finite().then_some(l.cohens_d),
                auc: l.auc,
                p_raw: l.p_raw,
                p_fdr: l.p_fdr,
            })
            .collect(),
        groups: heat.groups,
        group_heatmap: heat.group_means,
        clusters: pieces
            .iter()
            .zip(&set.cluster_labels)
            .map(|(piece, &label)| ClusterRow {
                composer: piece.composer.clone(),
                piece: piece.piece_id.clone(),
                group: piece.group.clone(),
                label,
            })
            .collect(),
        cluster_count: cluster.k,
        adjusted_rand_index: cluster.adjusted_rand_index,
    };

    let dir = p.output_dir().join("report");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    let path = dir.join("summary.json");
    crate::atomic::write_atomic(&path, json.as_bytes()).map_err(io_err(&path))?;
    let path = dir.join("summary.txt");
    crate::atomic::write_atomic(&path, render(&summary).as_bytes()).map_err(io_err(&path))?;
    Ok(summary)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

pub fn render(s: &Summary) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "melograph run summary");
    let _ = writeln!(t, "operating k = {}, WL iterations = {}\n", s.operating_k, s.wl_iterations);
    let _ = writeln!(t, "{:>3}  {:>10}  {:>10}  {:>9}  {:>7}  {:>10}", "k", "mean_intra", "mean_inter", "cohens_d", "auc", "p_fdr");
    for l in &s.levels {
        let marker = if l.k == s.operating_k { " *" } else { "" };
        let _ = writeln!(
            t,
            "{:>3}  {:>10.4}  {:>10.4}  {:>9}  {:>7.4}  {:>10}{marker}",
            l.k,
            l.mean_intra,
            l.mean_inter,
            cell(l.cohens_d),
            l.auc,
            l.p_fdr.map_or_else(|| "-".to_string(), |p| format!("{p:.3e}")),
        );
    }
    let _ = writeln!(t, "\ngroup similarity (operating k)");
    let _ = writeln!(t, "{:>14}  {}", "", s.groups.iter().map(|g| format!("{g:>12}")).collect::<Vec<_>>().join(" "));
    for (g, row) in s.groups.iter().zip(&s.group_heatmap) {
        let cells: Vec<String> = row.iter().map(|v| format!("{:>12}", cell(*v))).collect();
        let _ = writeln!(t, "{g:>14}  {}", cells.join(" "));
    }
    let _ = writeln!(t, "\nclusters (k = {}, adjusted Rand index {:.4})", s.cluster_count, s.adjusted_rand_index);
    for r in &s.clusters {
        let _ = writeln!(t, "  {:<16} {:<24} {}", r.composer, r.piece, r.label);
    }
    t
}
