//! Two-component principal component analysis.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::EmbedError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca2 {
    pub points: Vec<[f64; 2]>,
    /// Unit loadings, or zero vectors when the data has no variance there.
    pub components: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
    pub mean: Vec<f64>,
}

/// Projects mean-centred data onto the top two covariance eigenvectors.
/// Each component's largest-magnitude loading is made positive.
pub fn pca_2d(vectors: &[Vec<f64>]) -> Result<Pca2, EmbedError> {
    let n = vectors.len();
    if n < 2 {
        return Err(EmbedError::TooFewItems { needed: 2, got: n });
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(EmbedError::DimensionMismatch);
    }
    let mean: Vec<f64> = (0..dim).map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
    let centred = DMatrix::from_fn(n, dim, |i, j| vectors[i][j] - mean[j]);
    let cov = (centred.transpose() * &centred) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let tolerance = 1e-12 * eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);

    let mut components = [vec![0.0; dim], vec![0.0; dim]];
    let mut explained = [0.0; 2];
    for (slot, &c) in order.iter().take(2).enumerate() {
        let value = eig.eigenvalues[c];
        if value <= tolerance {
            continue;
        }
        let mut loading: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let pivot = loading
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("dim > 0");
        if loading[pivot] < 0.0 {
            loading.iter_mut().for_each(|v| *v = -*v);
        }
        components[slot] = loading;
        explained[slot] = value;
    }
    let points = (0..n)
        .map(|i| {
            let row = centred.row(i);
            let project = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [project(&components[0]), project(&components[1])]
        })
        .collect();
    Ok(Pca2 { points, components, explained_variance: explained, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    #[test]
    fn planar_data_keeps_distances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let u: Vec<f64> = vec![1.0, 2.0, 0.0, -1.0, 0.5];
        let v: Vec<f64> = vec![0.0, 1.0, 3.0, 1.0, -2.0];
        let data: Vec<Vec<f64>> = (0..12)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                (0..5).map(|j| 4.0 + a * u[j] + b * v[j]).collect()
            })
            .collect();
        let p = pca_2d(&data).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let full = data[i].iter().zip(&data[j]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                assert!((dist2(&p.points[i], &p.points[j]) - full).abs() < 1e-6);
            }
        }
        let dot: f64 = p.components[0].iter().zip(&p.components[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() <= 1e-9);
    }

    #[test]
    fn line_has_no_second_component() {
        let dir: Vec<f64> = (0..10).map(|j| (j as f64 + 1.0).sqrt()).collect();
        let data: Vec<Vec<f64>> = (0..8).map(|t| dir.iter().map(|d| t as f64 * d).collect()).collect();
        let p = pca_2d(&data).unwrap();
        assert!(p.explained_variance[0] > 0.0);
        assert_eq!(p.explained_variance[1], 0.0);
        assert!(p.points.iter().all(|pt| pt[1] == 0.0));
    }

    #[test]
    fn constant_data_projects_to_origin() {
        let data = vec![vec![1.0, 2.0]; 4];
        let p = pca_2d(&data).unwrap();
        assert_eq!(p.explained_variance, [0.0, 0.0]);
        assert!(p.points.iter().all(|pt| *pt == [0.0, 0.0]));
    }

    #[test]
    fn variances_match_covariance_eigenvalues() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let data: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                vec![3.0 * x[0], x[1] + x[0], 0.5 * x[2], x[3], 0.1 * x[4]]
            })
            .collect();
        let p = pca_2d(&data).unwrap();
        // oracle: power iteration on the covariance matrix, then deflation
        let n = data.len() as f64;
        let mean: Vec<f64> = (0..5).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let mut cov = vec![vec![0.0; 5]; 5];
        for r in &data {
            for a in 0..5 {
                for b in 0..5 {
                    cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / (n - 1.0);
                }
            }
        }
        for slot in 0..2 {
            let mut v = vec![1.0, 0.3, 0.2, 0.1, 0.05];
            let mut lambda = 0.0;
            for _ in 0..2000 {
                let w: Vec<f64> = (0..5).map(|a| (0..5).map(|b| cov[a][b] * v[b]).sum()).collect();
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                lambda = norm;
                v = w.iter().map(|x| x / norm).collect();
            }
            assert!((p.explained_variance[slot] - lambda).abs() < 1e-9, "slot {slot}");
            for a in 0..5 {
                for b in 0..5 {
                    cov[a][b] -= lambda * v[a] * v[b];
                }
            }
            // projected variance equals the eigenvalue
            let var = p.points.iter().map(|pt| pt[slot].powi(2)).sum::<f64>() / (n - 1.0);
            assert!((var - lambda).abs() < 1e-9);
        }
        assert!(p.explained_variance[0] >= p.explained_variance[1]);
    }
}
