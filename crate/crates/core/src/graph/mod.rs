//! Labeled k-nearest-neighbour graphs over a piece's segments.

mod export;

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::export::{from_graphml, from_json, to_dot, to_graphml, to_json};
use crate::annotate::{ExpectancyBin, IrSymbol};
use crate::dtw::DistanceMatrix;
use crate::segment::Segment;

/// Added to distances before inversion so identical segments get a finite weight.
pub const WEIGHT_EPSILON: f64 = 1e-9;

#[derive(Error, Debug)]
pub enum GraphError {
    #[error("k must be at least 1")]
    ZeroK,

    #[error("k = {k} needs more than {k} segments, piece has {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("no label data for segment {0}")]
    MissingLabel(String),

    #[error("segment {0} has no expectancy bin yet")]
    UnbinnedSegment(String),

    #[error("graph document: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub label: Option<String>,
    pub expectancy: Option<f64>,
}

/// Undirected weighted graph; edge keys are `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGraph {
    pub piece_id: String,
    pub k: usize,
    pub nodes: Vec<GraphNode>,
    pub edges: BTreeMap<(usize, usize), f64>,
}

impl SegmentGraph {
    pub fn new(piece_id: impl Into<String>, k: usize, nodes: Vec<GraphNode>) -> Self {
        SegmentGraph { piece_id: piece_id.into(), k, nodes, edges: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inserts or overwrites the edge `{a, b}`; self-loops are ignored.
    pub fn add_edge(&mut self, a: usize, b: usize, weight: f64) {
        if a != b {
            self.edges.insert((a.min(b), a.max(b)), weight);
        }
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        self.edges.get(&(a.min(b), a.max(b))).copied()
    }

    /// Sorted neighbour lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for &(a, b) in self.edges.keys() {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency().iter().map(Vec::len).collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Sum of weights of edges with one endpoint on each side.
    pub fn cut_cost(&self, side: &[bool]) -> f64 {
        self.edges
            .iter()
            .filter(|(&(a, b), _)| side[a] != side[b])
            .map(|(_, w)| w)
            .sum()
    }

    /// Subgraph induced by `members`, renumbered in the given order.
    pub fn induced(&self, members: &[usize]) -> SegmentGraph {
        let index: HashMap<usize, usize> = members.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let mut g = SegmentGraph::new(
            self.piece_id.clone(),
            self.k,
            members.iter().map(|&i| self.nodes[i].clone()).collect(),
        );
        for (&(a, b), &w) in &self.edges {
            if let (Some(&na), Some(&nb)) = (index.get(&a), index.get(&b)) {
                g.add_edge(na, nb, w);
            }
        }
        g
    }

    pub fn labels(&self) -> Vec<Option<&str>> {
        self.nodes.iter().map(|n| n.label.as_deref()).collect()
    }
}

/// Connects every segment to its `k` nearest segments by distance, breaking
/// ties toward the lower ordinal, then symmetrizes by union. Edge weight is
/// `1 / (d + WEIGHT_EPSILON)`.
pub fn knn_graph(d: &DistanceMatrix, piece_id: &str, k: usize) -> Result<SegmentGraph, GraphError> {
    let n = d.len();
    if k == 0 {
        return Err(GraphError::ZeroK);
    }
    if k >= n {
        return Err(GraphError::KTooLarge { k, n });
    }
    let nodes = d
        .ids
        .iter()
        .map(|id| GraphNode { id: id.clone(), label: None, expectancy: None })
        .collect();
    let mut g = SegmentGraph::new(piece_id, k, nodes);
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| d.get(i, a).total_cmp(&d.get(i, b)).then(a.cmp(&b)));
        for &j in &others[..k] {
            g.add_edge(i, j, 1.0 / (d.get(i, j) + WEIGHT_EPSILON));
        }
    }
    Ok(g)
}

/// `Bin|Symbol`, e.g. `High|P`.
pub fn compose_label(bin: ExpectancyBin, dominant: IrSymbol) -> String {
    format!("{bin}|{dominant}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeAnnotation {
    pub bin: Option<ExpectancyBin>,
    pub dominant: IrSymbol,
    pub expectancy: Option<f64>,
}

impl From<&Segment> for NodeAnnotation {
    fn from(s: &Segment) -> Self {
        NodeAnnotation { bin: s.bin, dominant: s.dominant, expectancy: s.expectancy }
    }
}

/// Attaches `Bin|Symbol` labels and expectancy values by node id.
pub fn label_nodes(
    mut graph: SegmentGraph,
    annotations: &HashMap<String, NodeAnnotation>,
) -> Result<SegmentGraph, GraphError> {
    for node in &mut graph.nodes {
        let a = annotations
            .get(&node.id)
            .ok_or_else(|| GraphError::MissingLabel(node.id.clone()))?;
        let bin = a.bin.ok_or_else(|| GraphError::UnbinnedSegment(node.id.clone()))?;
        node.label = Some(compose_label(bin, a.dominant));
        node.expectancy = a.expectancy;
    }
    Ok(graph)
}

/// Convenience: annotations keyed by segment id.
pub fn annotations_for(segments: &[Segment]) -> HashMap<String, NodeAnnotation> {
    segments.iter().map(|s| (s.id.to_string(), NodeAnnotation::from(s))).collect()
}
