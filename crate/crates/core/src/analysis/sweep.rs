//! Intra- versus inter-graph similarity across neighbourhood sizes, and
//! corpus similarity heatmaps.

use std::collections::BTreeMap;
use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kl::intra_similarity;
use super::stats::{benjamini_hochberg, cohens_d, is_degenerate, mann_whitney, mean};
use super::wl::WlFeatures;
use super::AnalysisError;
use crate::graph::SegmentGraph;

/// Finite values as JSON numbers; `inf`, `-inf` and `NaN` as strings.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KLevel {
    pub k: usize,
    /// One score per piece, in corpus order.
    pub intra_scores: Vec<f64>,
    /// One score per unordered piece pair, in canonical pair order.
    pub inter_scores: Vec<f64>,
    pub mean_intra: f64,
    pub mean_inter: f64,
    /// `±inf` when both score lists are constant; serialized as a string then.
    #[serde(with = "extended_float")]
    pub cohens_d: f64,
    pub degenerate: bool,
    pub auc: f64,
    pub u: f64,
    pub p_raw: f64,
    /// Benjamini-Hochberg adjusted; `None` for degenerate levels.
    pub p_fdr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub h: usize,
    pub levels: Vec<KLevel>,
}

impl SimilarityReport {
    pub fn level(&self, k: usize) -> Option<&KLevel> {
        self.levels.iter().find(|l| l.k == k)
    }

    /// `k,mean_intra,mean_inter,cohens_d,auc,p_raw,p_fdr` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,mean_intra,mean_inter,cohens_d,auc,p_raw,p_fdr\n");
        for l in &self.levels {
            let fdr = l.p_fdr.map(|p| p.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                l.k, l.mean_intra, l.mean_inter, l.cohens_d, l.auc, l.p_raw, fdr
            );
        }
        s
    }
}

/// Scores each k-level: KL intra-similarity per piece, WL similarity per
/// piece pair, then effect sizes and a Mann-Whitney test. BH correction is
/// applied across the non-degenerate levels.
pub fn k_sweep(
    levels: &[(usize, Vec<SegmentGraph>)],
    h: usize,
    seed: u64,
) -> Result<SimilarityReport, AnalysisError> {
    let mut out = Vec::with_capacity(levels.len());
    for (k, graphs) in levels {
        if graphs.len() < 3 {
            return Err(AnalysisError::TooFewPieces(graphs.len()));
        }
        let intra = graphs
            .par_iter()
            .map(|g| intra_similarity(g, h, seed))
            .collect::<Result<Vec<_>, _>>()?;
        let features = graphs
            .par_iter()
            .map(|g| WlFeatures::from_graph(g, h))
            .collect::<Result<Vec<_>, _>>()?;
        let inter = pairwise_upper(&features);
        let mw = mann_whitney(&intra, &inter);
        let degenerate = is_degenerate(&intra, &inter);
        out.push(KLevel {
            k: *k,
            mean_intra: mean(&intra),
            mean_inter: mean(&inter),
            cohens_d: cohens_d(&intra, &inter),
            degenerate,
            auc: mw.auc,
            u: mw.u,
            p_raw: mw.p,
            p_fdr: None,
            intra_scores: intra,
            inter_scores: inter,
        });
    }
    let tested: Vec<usize> = (0..out.len()).filter(|&i| !out[i].degenerate).collect();
    let adjusted = benjamini_hochberg(&tested.iter().map(|&i| out[i].p_raw).collect::<Vec<_>>());
    for (&i, p) in tested.iter().zip(adjusted) {
        out[i].p_fdr = Some(p);
    }
    Ok(SimilarityReport { h, levels: out })
}

fn pairwise_upper(features: &[WlFeatures]) -> Vec<f64> {
    let n = features.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    pairs.par_iter().map(|&(i, j)| features[i].similarity(&features[j])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmaps {
    pub piece_ids: Vec<String>,
    pub piecewise: Vec<Vec<f64>>,
    /// Group names in order of first appearance.
    pub groups: Vec<String>,
    /// Mean similarity between groups; `None` where no distinct pair exists.
    pub group_means: Vec<Vec<Option<f64>>>,
}

impl Heatmaps {
    pub fn piecewise_csv(&self) -> String {
        square_csv(&self.piece_ids, |i, j| self.piecewise[i][j].to_string())
    }

    /// Missing cells are left empty.
    pub fn group_csv(&self) -> String {
        square_csv(&self.groups, |i, j| self.group_means[i][j].map(|v| v.to_string()).unwrap_or_default())
    }
}

fn square_csv(ids: &[String], cell: impl Fn(usize, usize) -> String) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("id").chain(ids.iter().map(String::as_str)).collect();
    w.write_record(&header).expect("in-memory write");
    for (i, id) in ids.iter().enumerate() {
        let row: Vec<String> = std::iter::once(id.clone()).chain((0..ids.len()).map(|j| cell(i, j))).collect();
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Piece-by-piece WL similarity and its group averages. Diagonal group
/// cells average distinct within-group pairs only.
pub fn corpus_heatmaps(
    graphs: &[SegmentGraph],
    groups: &[String],
    h: usize,
) -> Result<Heatmaps, AnalysisError> {
    if graphs.len() != groups.len() {
        return Err(AnalysisError::GroupMismatch { graphs: graphs.len(), groups: groups.len() });
    }
    let n = graphs.len();
    let features = graphs
        .par_iter()
        .map(|g| WlFeatures::from_graph(g, h))
        .collect::<Result<Vec<_>, _>>()?;
    let upper = pairwise_upper(&features);
    let mut piecewise = vec![vec![0.0; n]; n];
    let mut it = upper.into_iter();
    for i in 0..n {
        piecewise[i][i] = features[i].similarity(&features[i]);
        for j in i + 1..n {
            let v = it.next().expect("one score per pair");
            piecewise[i][j] = v;
            piecewise[j][i] = v;
        }
    }

    let mut names: Vec<String> = Vec::new();
    for g in groups {
        if !names.contains(g) {
            names.push(g.clone());
        }
    }
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let m = names.len();
    let mut sums = vec![vec![(0.0, 0usize); m]; m];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (index[groups[i].as_str()], index[groups[j].as_str()]);
            for (x, y) in [(a, b), (b, a)] {
                sums[x][y].0 += piecewise[i][j];
                sums[x][y].1 += 1;
                if a == b {
                    break;
                }
            }
        }
    }
    let group_means = sums
        .iter()
        .map(|row| row.iter().map(|&(s, c)| (c > 0).then(|| s / c as f64)).collect())
        .collect();
    Ok(Heatmaps {
        piece_ids: graphs.iter().map(|g| g.piece_id.clone()).collect(),
        piecewise,
        groups: names,
        group_means,
    })
}
