//! Kernighan-Lin balanced bisection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::wl::wl_kernel;
use super::AnalysisError;
use crate::graph::SegmentGraph;

/// Gains at or below this are treated as no improvement.
const GAIN_TOLERANCE: f64 = 1e-12;
const MAX_PASSES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bisection {
    /// `true` for members of side B.
    pub side: Vec<bool>,
    pub initial_cut: f64,
    /// Cut cost after the seeded split and after each applied pass.
    pub cut_history: Vec<f64>,
}

impl Bisection {
    pub fn members(&self, b_side: bool) -> Vec<usize> {
        (0..self.side.len()).filter(|&v| self.side[v] == b_side).collect()
    }

    pub fn final_cut(&self) -> f64 {
        *self.cut_history.last().expect("history starts with the initial cut")
    }
}

fn weight_matrix(g: &SegmentGraph) -> Vec<Vec<f64>> {
    let n = g.len();
    let mut w = vec![vec![0.0; n]; n];
    for (&(a, b), &x) in &g.edges {
        w[a][b] = x;
        w[b][a] = x;
    }
    w
}

/// Seeded balanced split refined by Kernighan-Lin passes until a pass
/// brings no positive gain. Side A gets `n / 2` nodes.
pub fn kl_bisect(g: &SegmentGraph, seed: u64) -> Result<Bisection, AnalysisError> {
    let n = g.len();
    if n < 4 {
        return Err(AnalysisError::TooSmall { graph: g.piece_id.clone(), n });
    }
    let w = weight_matrix(g);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut side = vec![false; n];
    for &v in &order[n / 2..] {
        side[v] = true;
    }
    let initial_cut = g.cut_cost(&side);
    let mut cut_history = vec![initial_cut];

    for _ in 0..MAX_PASSES {
        let (swaps, gain) = kl_pass(&w, &side);
        if gain <= GAIN_TOLERANCE {
            break;
        }
        for (a, b) in swaps {
            side[a] = true;
            side[b] = false;
        }
        cut_history.push(g.cut_cost(&side));
    }
    Ok(Bisection { side, initial_cut, cut_history })
}

/// One pass: tentatively swap locked pairs greedily, return the prefix of
/// swaps with the largest cumulative gain.
fn kl_pass(w: &[Vec<f64>], side: &[bool]) -> (Vec<(usize, usize)>, f64) {
    let n = side.len();
    // D(v) = external - internal cost
    let mut d: Vec<f64> = (0..n)
        .map(|v| (0..n).map(|u| if side[u] != side[v] { w[v][u] } else { -w[v][u] }).sum())
        .collect();
    let mut locked = vec![false; n];
    let a_nodes: Vec<usize> = (0..n).filter(|&v| !side[v]).collect();
    let b_nodes: Vec<usize> = (0..n).filter(|&v| side[v]).collect();
    let steps = a_nodes.len().min(b_nodes.len());

    let mut swaps = Vec::with_capacity(steps);
    let mut cumulative = 0.0;
    let mut best = (0usize, 0.0f64);
    for _ in 0..steps {
        let mut choice: Option<(f64, usize, usize)> = None;
        for &a in a_nodes.iter().filter(|&&a| !locked[a]) {
            for &b in b_nodes.iter().filter(|&&b| !locked[b]) {
                let gain = d[a] + d[b] - 2.0 * w[a][b];
                if choice.is_none_or(|(g, _, _)| gain > g) {
                    choice = Some((gain, a, b));
                }
            }
        }
        let (gain, a, b) = choice.expect("unlocked nodes remain on both sides");
        locked[a] = true;
        locked[b] = true;
        for v in (0..n).filter(|&v| !locked[v]) {
            // moving a to B and b to A
            if side[v] {
                d[v] += 2.0 * w[v][b] - 2.0 * w[v][a];
            } else {
                d[v] += 2.0 * w[v][a] - 2.0 * w[v][b];
            }
        }
        swaps.push((a, b));
        cumulative += gain;
        if cumulative > best.1 {
            best = (swaps.len(), cumulative);
        }
    }
    swaps.truncate(best.0);
    (swaps, best.1)
}

/// WL similarity between the two Kernighan-Lin halves of a graph.
pub fn intra_similarity(g: &SegmentGraph, h: usize, seed: u64) -> Result<f64, AnalysisError> {
    let split = kl_bisect(g, seed)?;
    let a = g.induced(&split.members(false));
    let b = g.induced(&split.members(true));
    wl_kernel(&a, &b, h)
}
