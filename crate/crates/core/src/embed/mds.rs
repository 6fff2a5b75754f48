//! Metric MDS by SMACOF, started from classical scaling, plus the
//! cluster diagnostics computed in the embedded plane.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::EmbedError;
use crate::dtw::DistanceMatrix;

pub const SMACOF_TOLERANCE: f64 = 1e-6;
pub const SMACOF_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdsFit {
    pub points: Vec<[f64; 2]>,
    /// Normalized stress `sqrt(sum (d_ij - delta_ij)^2 / sum delta_ij^2)`.
    pub stress: f64,
    /// Normalized stress of the start and after each iteration.
    pub stress_history: Vec<f64>,
}

fn planar_distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn normalized_stress(points: &[[f64; 2]], delta: &DistanceMatrix, scale: f64) -> f64 {
    let n = points.len();
    let mut raw = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            raw += (planar_distance(&points[i], &points[j]) - delta.get(i, j)).powi(2);
        }
    }
    (raw / scale).sqrt()
}

/// Top-two classical scaling coordinates (double centring of squared
/// distances). Negative eigenvalues are treated as zero.
pub fn classical_scaling(delta: &DistanceMatrix) -> Vec<[f64; 2]> {
    let n = delta.len();
    let sq = DMatrix::from_fn(n, n, |i, j| delta.get(i, j).powi(2));
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let grand = sq.mean();
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut points = vec![[0.0; 2]; n];
    for (dim, &c) in order.iter().take(2).enumerate() {
        let scale = eig.eigenvalues[c].max(0.0).sqrt();
        for (i, p) in points.iter_mut().enumerate() {
            p[dim] = eig.eigenvectors[(i, c)] * scale;
        }
    }
    points
}

/// SMACOF with unit weights: repeated Guttman transforms until the stress
/// improvement falls below [`SMACOF_TOLERANCE`] or [`SMACOF_MAX_ITER`].
pub fn smacof(delta: &DistanceMatrix) -> Result<MdsFit, EmbedError> {
    let n = delta.len();
    if n < 2 {
        return Err(EmbedError::TooFewItems { needed: 2, got: n });
    }
    let scale: f64 = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| delta.get(i, j).powi(2)).sum();
    if scale == 0.0 {
        return Err(EmbedError::DegenerateDistances);
    }
    let mut x = classical_scaling(delta);
    let mut stress = normalized_stress(&x, delta, scale);
    let mut history = vec![stress];
    for _ in 0..SMACOF_MAX_ITER {
        let next = guttman_transform(&x, delta);
        let next_stress = normalized_stress(&next, delta, scale);
        if next_stress > stress {
            // only reachable through rounding; keep the better configuration
            break;
        }
        let improvement = stress - next_stress;
        x = next;
        stress = next_stress;
        history.push(stress);
        if improvement < SMACOF_TOLERANCE {
            break;
        }
    }
    Ok(MdsFit { points: x, stress, stress_history: history })
}

fn guttman_transform(x: &[[f64; 2]], delta: &DistanceMatrix) -> Vec<[f64; 2]> {
    let n = x.len();
    let mut out = vec![[0.0; 2]; n];
    for i in 0..n {
        let mut diag = 0.0;
        let mut acc = [0.0; 2];
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = planar_distance(&x[i], &x[j]);
            let b = if d > 0.0 { -delta.get(i, j) / d } else { 0.0 };
            diag -= b;
            acc[0] += b * x[j][0];
            acc[1] += b * x[j][1];
        }
        out[i] = [(acc[0] + diag * x[i][0]) / n as f64, (acc[1] + diag * x[i][1]) / n as f64];
    }
    out
}

/// Mean silhouette over 2-D points; `None` with fewer than two labels.
/// Members of singleton clusters score 0.
pub fn silhouette(points: &[[f64; 2]], labels: &[usize]) -> Option<f64> {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 || points.is_empty() {
        return None;
    }
    let scores: Vec<f64> = (0..points.len())
        .map(|i| {
            let mean_to = |label: usize| {
                let (sum, count) = (0..points.len())
                    .filter(|&j| j != i && labels[j] == label)
                    .fold((0.0, 0usize), |(s, c), j| (s + planar_distance(&points[i], &points[j]), c + 1));
                (count > 0).then(|| sum / count as f64)
            };
            let Some(a) = mean_to(labels[i]) else { return 0.0 };
            let b = distinct
                .iter()
                .filter(|&&l| l != labels[i])
                .filter_map(|&l| mean_to(l))
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 { (b - a) / denom } else { 0.0 }
        })
        .collect();
    Some(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Leave-one-out k-NN accuracy; votes tie toward the nearest neighbour's
/// label, distance ties toward the lower index.
pub fn knn_accuracy(points: &[[f64; 2]], labels: &[usize], k: usize) -> f64 {
    let n = points.len();
    if n < 2 || k == 0 {
        return 0.0;
    }
    let correct = (0..n)
        .filter(|&i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                planar_distance(&points[i], &points[a])
                    .total_cmp(&planar_distance(&points[i], &points[b]))
                    .then(a.cmp(&b))
            });
            let neighbours = &others[..k.min(others.len())];
            let mut votes: Vec<(usize, usize, usize)> = Vec::new(); // (label, count, first position)
            for (pos, &j) in neighbours.iter().enumerate() {
                match votes.iter_mut().find(|v| v.0 == labels[j]) {
                    Some(v) => v.1 += 1,
                    None => votes.push((labels[j], 1, pos)),
                }
            }
            let winner = votes
                .iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
                .expect("at least one neighbour");
            winner.0 == labels[i]
        })
        .count();
    correct as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdsResult {
    pub ids: Vec<String>,
    /// Piece of origin per point.
    pub labels: Vec<usize>,
    pub points: Vec<[f64; 2]>,
    pub stress: f64,
    pub stress_history: Vec<f64>,
    pub silhouette_mean: f64,
    pub knn_accuracy: f64,
}

/// Embeds the joint distance matrix of two (or more) pieces' segments and
/// scores how well pieces separate in the plane.
pub fn joint_segment_mds(d: &DistanceMatrix, labels: &[usize], knn_k: usize) -> Result<MdsResult, EmbedError> {
    if d.len() < 3 {
        return Err(EmbedError::TooFewItems { needed: 3, got: d.len() });
    }
    let fit = smacof(d)?;
    Ok(MdsResult {
        ids: d.ids.clone(),
        labels: labels.to_vec(),
        silhouette_mean: silhouette(&fit.points, labels).unwrap_or(0.0),
        knn_accuracy: knn_accuracy(&fit.points, labels, knn_k),
        points: fit.points,
        stress: fit.stress,
        stress_history: fit.stress_history,
    })
}
