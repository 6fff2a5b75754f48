//! Weisfeiler-Lehman subtree kernel.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::graph::SegmentGraph;
use crate::hashing::sha256;

/// Upper bound on refinement rounds.
pub const MAX_WL_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WlConfig {
    pub iterations: usize,
}

impl Default for WlConfig {
    fn default() -> Self {
        WlConfig { iterations: 3 }
    }
}

impl WlConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.iterations > MAX_WL_ITERATIONS {
            return Err(AnalysisError::TooManyIterations(self.iterations));
        }
        Ok(())
    }
}

/// Canonical compressed label for a node and its neighbourhood.
pub fn relabel(own: &str, neighbours: &mut [&str]) -> String {
    neighbours.sort_unstable();
    let mut key = String::with_capacity(own.len() + 2 + neighbours.iter().map(|s| s.len() + 1).sum::<usize>());
    key.push_str(own);
    key.push('(');
    for (i, n) in neighbours.iter().enumerate() {
        if i > 0 {
            key.push(',');
        }
        key.push_str(n);
    }
    key.push(')');
    hex::encode(&sha256(key.as_bytes())[..12])
}

/// Node labels after each round, round 0 being the raw labels.
pub fn wl_label_rounds(g: &SegmentGraph, h: usize) -> Result<Vec<Vec<String>>, AnalysisError> {
    if h > MAX_WL_ITERATIONS {
        return Err(AnalysisError::TooManyIterations(h));
    }
    let raw = g
        .nodes
        .iter()
        .map(|n| {
            n.label.clone().ok_or_else(|| AnalysisError::Unlabeled {
                graph: g.piece_id.clone(),
                node: n.id.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let adj = g.adjacency();
    let mut rounds = vec![raw];
    for _ in 0..h {
        let prev = rounds.last().expect("round 0 exists");
        let next = adj
            .iter()
            .enumerate()
            .map(|(v, ns)| {
                let mut neighbour_labels: Vec<&str> = ns.iter().map(|&u| prev[u].as_str()).collect();
                relabel(&prev[v], &mut neighbour_labels)
            })
            .collect();
        rounds.push(next);
    }
    Ok(rounds)
}

/// Subtree-pattern counts keyed by `(round, label)`, with a cached norm.
#[derive(Debug, Clone, PartialEq)]
pub struct WlFeatures {
    pub counts: BTreeMap<(usize, String), u64>,
    self_dot: f64,
}

impl WlFeatures {
    pub fn from_graph(g: &SegmentGraph, h: usize) -> Result<Self, AnalysisError> {
        let mut counts = BTreeMap::new();
        for (round, labels) in wl_label_rounds(g, h)?.into_iter().enumerate() {
            for label in labels {
                *counts.entry((round, label)).or_insert(0) += 1;
            }
        }
        Ok(Self::from_counts(counts))
    }

    pub fn from_counts(counts: BTreeMap<(usize, String), u64>) -> Self {
        let self_dot = counts.values().map(|&c| (c * c) as f64).sum();
        WlFeatures { counts, self_dot }
    }

    pub fn dot(&self, other: &WlFeatures) -> f64 {
        let (small, large) = if self.counts.len() <= other.counts.len() { (self, other) } else { (other, self) };
        small
            .counts
            .iter()
            .filter_map(|(key, &c)| large.counts.get(key).map(|&d| (c * d) as f64))
            .sum()
    }

    /// Normalized kernel; 0 when either side has no features.
    pub fn similarity(&self, other: &WlFeatures) -> f64 {
        let denom = (self.self_dot * other.self_dot).sqrt();
        if denom == 0.0 {
            return 0.0;
        }
        let v = self.dot(other) / denom;
        if v > 0.0 { v.min(1.0) } else { 0.0 }
    }
}

/// Normalized WL subtree kernel over `h` refinement rounds. Edge weights
/// play no part; only topology and labels do.
pub fn wl_kernel(g1: &SegmentGraph, g2: &SegmentGraph, h: usize) -> Result<f64, AnalysisError> {
    Ok(WlFeatures::from_graph(g1, h)?.similarity(&WlFeatures::from_graph(g2, h)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphNode;
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use std::collections::HashMap;

    pub(crate) fn labeled(labels: &[&str], edges: &[(usize, usize)]) -> SegmentGraph {
        let nodes = labels
            .iter()
            .enumerate()
            .map(|(i, l)| GraphNode { id: format!("g#{i}"), label: Some(l.to_string()), expectancy: None })
            .collect();
        let mut g = SegmentGraph::new("g", 1, nodes);
        for &(a, b) in edges {
            g.add_edge(a, b, 1.0);
        }
        g
    }

    fn random_graph(rng: &mut impl Rng, n: usize) -> SegmentGraph {
        const ALPHABET: [&str; 3] = ["High|P", "Low|R", "Medium|D"];
        let labels: Vec<&str> = (0..n).map(|_| ALPHABET[rng.random_range(0..3)]).collect();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(0.4) {
                    edges.push((a, b));
                }
            }
        }
        labeled(&labels, &edges)
    }

    /// Unhashed WL: labels are the fully expanded nested strings.
    fn expanded_kernel(g1: &SegmentGraph, g2: &SegmentGraph, h: usize) -> f64 {
        let features = |g: &SegmentGraph| {
            let adj = g.adjacency();
            let mut labels: Vec<String> = g.nodes.iter().map(|n| n.label.clone().unwrap()).collect();
            let mut counts: HashMap<String, f64> = HashMap::new();
            for round in 0..=h {
                if round > 0 {
                    labels = adj
                        .iter()
                        .enumerate()
                        .map(|(v, ns)| {
                            let mut nl: Vec<&String> = ns.iter().map(|&u| &labels[u]).collect();
                            nl.sort();
                            format!("{}[{}]", labels[v], nl.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(";"))
                        })
                        .collect();
                }
                for l in &labels {
                    *counts.entry(format!("{round}:{l}")).or_default() += 1.0;
                }
            }
            counts
        };
        let (a, b) = (features(g1), features(g2));
        let dot = |x: &HashMap<String, f64>, y: &HashMap<String, f64>| {
            x.iter().map(|(k, v)| v * y.get(k).copied().unwrap_or(0.0)).sum::<f64>()
        };
        dot(&a, &b) / (dot(&a, &a) * dot(&b, &b)).sqrt()
    }

    #[test]
    fn self_similarity_is_one() {
        let g = labeled(&["A", "B", "A"], &[(0, 1), (1, 2)]);
        for h in [0, 1, 3] {
            assert!((wl_kernel(&g, &g, h).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_alphabets_are_orthogonal() {
        let g1 = labeled(&["A", "B"], &[(0, 1)]);
        let g2 = labeled(&["C", "D"], &[(0, 1)]);
        assert_eq!(wl_kernel(&g1, &g2, 3).unwrap(), 0.0);
    }

    #[test]
    fn hand_enumerated_four_node_pair() {
        // g1: path A-B-A-B ; g2: star with B centre and leaves A, A, B
        let g1 = labeled(&["A", "B", "A", "B"], &[(0, 1), (1, 2), (2, 3)]);
        let g2 = labeled(&["B", "A", "A", "B"], &[(0, 1), (0, 2), (0, 3)]);
        // round 0: g1 {A:2,B:2}, g2 {A:2,B:2}
        // round 1 patterns
        //   g1: A(B), B(A,A), A(B,B), B(A)
        //   g2: B(A,A,B), A(B), A(B), B(B)
        // shared: A(B) with counts 1 and 2
        // K12 = (4 + 4) + 1*2 = 10
        // K11 = 8 + 4 = 12, K22 = 8 + (1 + 4 + 1) = 14
        let expected = 10.0 / (12.0f64 * 14.0).sqrt();
        assert!((wl_kernel(&g1, &g2, 1).unwrap() - expected).abs() < 1e-12);
        assert!((expanded_kernel(&g1, &g2, 1) - expected).abs() < 1e-12);
    }

    #[test]
    fn unlabeled_node_is_an_error() {
        let mut g = labeled(&["A", "B"], &[(0, 1)]);
        g.nodes[1].label = None;
        assert!(matches!(wl_kernel(&g, &g, 1), Err(AnalysisError::Unlabeled { .. })));
    }

    #[test]
    fn iteration_limit() {
        let g = labeled(&["A"], &[]);
        assert!(matches!(wl_kernel(&g, &g, 11), Err(AnalysisError::TooManyIterations(11))));
    }

    #[test]
    fn matches_expanded_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n1 = rng.random_range(1..9);
            let n2 = rng.random_range(1..9);
            let g1 = random_graph(&mut rng, n1);
            let g2 = random_graph(&mut rng, n2);
            for h in [1, 2, 3, 5] {
                let got = wl_kernel(&g1, &g2, h).unwrap();
                assert!((got - expanded_kernel(&g1, &g2, h)).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(seed in 0u64..1000, h in 0usize..5) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g1 = random_graph(&mut rng, 6);
            let g2 = random_graph(&mut rng, 7);
            let a = wl_kernel(&g1, &g2, h).unwrap();
            let b = wl_kernel(&g2, &g1, h).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn h0_is_label_histogram_cosine(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g1 = random_graph(&mut rng, 5);
            let g2 = random_graph(&mut rng, 8);
            let hist = |g: &SegmentGraph| {
                let mut m: HashMap<String, f64> = HashMap::new();
                for n in &g.nodes {
                    *m.entry(n.label.clone().unwrap()).or_default() += 1.0;
                }
                m
            };
            let (a, b) = (hist(&g1), hist(&g2));
            let dot = |x: &HashMap<String, f64>, y: &HashMap<String, f64>| {
                x.iter().map(|(k, v)| v * y.get(k).copied().unwrap_or(0.0)).sum::<f64>()
            };
            let direct = dot(&a, &b) / (dot(&a, &a) * dot(&b, &b)).sqrt();
            prop_assert!((wl_kernel(&g1, &g2, 0).unwrap() - direct).abs() < 1e-12);
        }

        #[test]
        fn permutation_invariant(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(&mut rng, 7);
            let other = random_graph(&mut rng, 6);
            let mut perm: Vec<usize> = (0..7).collect();
            perm.shuffle(&mut rng);
            let permuted = g.induced(&perm);
            let a = wl_kernel(&g, &other, 3).unwrap();
            let b = wl_kernel(&permuted, &other, 3).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
