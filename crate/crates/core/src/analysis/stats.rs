//! Effect sizes, rank tests and multiple-comparison correction.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn sample_variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Average ranks (1-based) with ties sharing the mean rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// `(mean_x - mean_y) / pooled_sd`. With zero pooled variance the result is
/// `±inf`, or 0 when the means agree; see [`is_degenerate`].
pub fn cohens_d(x: &[f64], y: &[f64]) -> f64 {
    let diff = mean(x) - mean(y);
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let pooled = if n1 + n2 > 2.0 {
        (((n1 - 1.0) * sample_variance(x) + (n2 - 1.0) * sample_variance(y)) / (n1 + n2 - 2.0)).sqrt()
    } else {
        0.0
    };
    if pooled > 0.0 {
        diff / pooled
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// True when the pooled standard deviation is zero.
pub fn is_degenerate(x: &[f64], y: &[f64]) -> bool {
    x.len() + y.len() <= 2 || (sample_variance(x) == 0.0 && sample_variance(y) == 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    /// `u / (n1 * n2)`: probability that a draw from x beats one from y, ties half.
    pub auc: f64,
    pub z: f64,
    /// Two-sided p-value, normal approximation with tie and continuity corrections.
    pub p: f64,
}

pub fn mann_whitney(x: &[f64], y: &[f64]) -> MannWhitney {
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = average_ranks(&pooled);
    let r1: f64 = ranks[..x.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let auc = u / (n1 * n2);

    let n = n1 + n2;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let mu = n1 * n2 / 2.0;
    if variance.is_nan() || variance <= 0.0 {
        return MannWhitney { u, auc, z: 0.0, p: 1.0 };
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / variance.sqrt();
    let normal = Normal::standard();
    let p = (2.0 * normal.sf(z)).clamp(f64::MIN_POSITIVE, 1.0);
    MannWhitney { u, auc, z: z * (u - mu).signum(), p }
}

/// Benjamini-Hochberg step-up adjusted p-values, in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &idx) in order.iter().enumerate().rev() {
        running = running.min(p[idx] * m as f64 / (pos + 1) as f64);
        adjusted[idx] = running.min(1.0);
    }
    adjusted
}

/// Spearman rank correlation; NaN when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_samples() {
        let x = [0.2, 0.5, 0.7, 0.9];
        assert_eq!(cohens_d(&x, &x), 0.0);
        let mw = mann_whitney(&x, &x);
        assert_eq!(mw.auc, 0.5);
        assert_eq!(mw.p, 1.0);
    }

    #[test]
    fn complete_separation() {
        let mw = mann_whitney(&[0.9, 0.8], &[0.2, 0.1]);
        assert_eq!(mw.auc, 1.0);
        assert_eq!(mw.u, 4.0);
    }

    #[test]
    fn bh_hand_example() {
        assert_eq!(benjamini_hochberg(&[0.01, 0.02, 0.03, 0.04]), vec![0.04; 4]);
        let adj = benjamini_hochberg(&[0.04, 0.001, 0.5]);
        assert!((adj[1] - 0.003).abs() < 1e-15);
        assert!((adj[0] - 0.06).abs() < 1e-15);
        assert_eq!(adj[2], 0.5);
    }

    #[test]
    fn degenerate_effect_sizes() {
        assert_eq!(cohens_d(&[1.0, 1.0], &[0.0, 0.0]), f64::INFINITY);
        assert_eq!(cohens_d(&[0.0, 0.0], &[1.0, 1.0]), f64::NEG_INFINITY);
        assert!(is_degenerate(&[1.0, 1.0], &[0.0, 0.0]));
        assert!(!is_degenerate(&[1.0, 2.0], &[0.0, 0.0]));
    }

    #[test]
    fn cohens_d_hand_value() {
        // means 2 and 5, both variances 1 -> d = -3
        assert!((cohens_d(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn mann_whitney_reference_value() {
        // x = 1..5, y = 6..10: U = 0, mu = 12.5, var = 25*11/12
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [6.0, 7.0, 8.0, 9.0, 10.0];
        let mw = mann_whitney(&x, &y);
        assert_eq!(mw.u, 0.0);
        let z = 12.0 / (25.0f64 * 11.0 / 12.0).sqrt();
        assert!((mw.z + z).abs() < 1e-12);
        let expected = 2.0 * Normal::standard().sf(z);
        assert!((mw.p - expected).abs() < 1e-15);
        // scipy.stats.mannwhitneyu(method="asymptotic", use_continuity=True)
        assert!((mw.p - 0.012185780355344813).abs() < 1e-9);

        let tied = mann_whitney(&[1.0, 2.0, 2.0, 3.0, 5.0], &[2.0, 3.0, 4.0, 4.0, 9.0, 9.0]);
        assert_eq!(tied.u, 6.5);
        assert!((tied.p - 0.13770287768403508).abs() < 1e-9);
    }

    #[test]
    fn spearman_monotone() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auc_equals_pairwise_count(
            x in proptest::collection::vec(0u8..6, 1..12),
            y in proptest::collection::vec(0u8..6, 1..12),
        ) {
            let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
            let mut wins = 0.0;
            for a in &xf {
                for b in &yf {
                    wins += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
                }
            }
            let mw = mann_whitney(&xf, &yf);
            prop_assert_eq!(mw.u, wins);
            prop_assert_eq!(mw.auc, mw.u / (xf.len() * yf.len()) as f64);
            prop_assert!(mw.p > 0.0 && mw.p <= 1.0);
        }

        #[test]
        fn bh_is_monotone(p in proptest::collection::vec(0.0001f64..1.0, 1..20)) {
            let adj = benjamini_hochberg(&p);
            for i in 0..p.len() {
                prop_assert!(adj[i] >= p[i] - 1e-15);
                for j in 0..p.len() {
                    if p[i] <= p[j] {
                        prop_assert!(adj[i] <= adj[j] + 1e-15);
                    }
                }
            }
        }
    }
}
