//! Two-factor melodic expectancy (pitch proximity and pitch reversal).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ir::{IrSymbol, SMALL_INTERVAL_MAX};
use crate::ingest::NoteMatrix;

/// Squared semipartial correlation of pitch proximity.
pub const SR2_PITCH_PROXIMITY: f64 = 0.364;
/// Squared semipartial correlation of pitch reversal.
pub const SR2_PITCH_REVERSAL: f64 = 0.144;
/// Proximity weight, `√0.364` rounded to three places.
pub const BETA_PP: f64 = 0.604;
/// Reversal weight, `√0.144` rounded to three places.
pub const BETA_PR: f64 = 0.379;

/// Realized intervals at or beyond this many semitones score zero proximity.
pub const PROXIMITY_CAP: i32 = 12;
/// Distance from the first note of the triplet that counts as a registral return.
pub const REGISTRAL_RETURN_MAX: i32 = 2;

/// Signed square root of a squared semipartial correlation.
pub fn beta_from_sr2(sr2: f64) -> f64 {
    sr2.signum() * sr2.abs().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectancyScore {
    pub pp_norm: f64,
    pub pr_norm: f64,
    pub e: f64,
}

impl ExpectancyScore {
    pub fn from_factors(pp_norm: f64, pr_norm: f64) -> Self {
        Self {
            pp_norm,
            pr_norm,
            e: BETA_PP * pp_norm + BETA_PR * pr_norm,
        }
    }
}

/// Proximity on a fixed scale: 1 for a repeated note, 0 for an octave or more.
pub fn pitch_proximity_norm(p2: u8, p3: u8) -> f64 {
    let realized = (p3 as i32 - p2 as i32).abs().min(PROXIMITY_CAP);
    1.0 - realized as f64 / PROXIMITY_CAP as f64
}

/// Raw reversal score in `-1..=2`.
///
/// Small implicative intervals score 0. After a large one, a change of
/// direction scores +1 and a continuation −1 (a repeated note neither);
/// landing within two semitones of the first note adds 1.
pub fn pitch_reversal_raw(p1: u8, p2: u8, p3: u8) -> i32 {
    let implicative = p2 as i32 - p1 as i32;
    let realized = p3 as i32 - p2 as i32;
    if implicative.abs() <= SMALL_INTERVAL_MAX {
        return 0;
    }
    let mut score = match realized.signum() * implicative.signum() {
        0 => 0,
        -1 => 1,
        _ => -1,
    };
    if (p3 as i32 - p1 as i32).abs() <= REGISTRAL_RETURN_MAX {
        score += 1;
    }
    score
}

/// Min/max of the raw reversal score over every triplet in a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pr_min: i32,
    pub pr_max: i32,
    pub triplets: usize,
}

impl CorpusStats {
    pub fn from_triplets<I: IntoIterator<Item = (u8, u8, u8)>>(triplets: I) -> Self {
        let mut stats = CorpusStats {
            pr_min: 0,
            pr_max: 0,
            triplets: 0,
        };
        for (p1, p2, p3) in triplets {
            let raw = pitch_reversal_raw(p1, p2, p3);
            if stats.triplets == 0 {
                stats.pr_min = raw;
                stats.pr_max = raw;
            } else {
                stats.pr_min = stats.pr_min.min(raw);
                stats.pr_max = stats.pr_max.max(raw);
            }
            stats.triplets += 1;
        }
        stats
    }

    pub fn from_matrices<'a, I: IntoIterator<Item = &'a NoteMatrix>>(matrices: I) -> Self {
        Self::from_triplets(matrices.into_iter().flat_map(|m| {
            let p = m.pitches();
            (1..p.len().saturating_sub(1))
                .map(|i| (p[i - 1], p[i], p[i + 1]))
                .collect::<Vec<_>>()
        }))
    }

    pub fn is_degenerate(&self) -> bool {
        self.pr_max == self.pr_min
    }

    /// Min-max scaled reversal; 0.5 when the corpus shows a single value.
    pub fn normalize_reversal(&self, raw: i32) -> f64 {
        if self.is_degenerate() {
            return 0.5;
        }
        let v = (raw - self.pr_min) as f64 / (self.pr_max - self.pr_min) as f64;
        v.clamp(0.0, 1.0)
    }
}

pub fn note_expectancy(p1: u8, p2: u8, p3: u8, stats: &CorpusStats) -> ExpectancyScore {
    ExpectancyScore::from_factors(
        pitch_proximity_norm(p2, p3),
        stats.normalize_reversal(pitch_reversal_raw(p1, p2, p3)),
    )
}

/// Per-note expectancy; boundary notes (no triplet) are `None`.
pub fn matrix_expectancies(matrix: &NoteMatrix, stats: &CorpusStats) -> Vec<Option<ExpectancyScore>> {
    let p = matrix.pitches();
    let n = p.len();
    (0..n)
        .map(|i| (i > 0 && i + 1 < n).then(|| note_expectancy(p[i - 1], p[i], p[i + 1], stats)))
        .collect()
}

/// Mean of the defined note-level values, `None` if there are none.
pub fn segment_expectancy(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExpectancyBin {
    VeryLow,
    Low,
    Medium,
    High,
    VeryHigh,
}

impl ExpectancyBin {
    pub const ALL: [ExpectancyBin; 5] = [
        ExpectancyBin::VeryLow,
        ExpectancyBin::Low,
        ExpectancyBin::Medium,
        ExpectancyBin::High,
        ExpectancyBin::VeryHigh,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExpectancyBin::VeryLow => "VeryLow",
            ExpectancyBin::Low => "Low",
            ExpectancyBin::Medium => "Medium",
            ExpectancyBin::High => "High",
            ExpectancyBin::VeryHigh => "VeryHigh",
        }
    }
}

impl fmt::Display for ExpectancyBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExpectancyBin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExpectancyBin::ALL
            .iter()
            .find(|b| b.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown expectancy bin `{s}`"))
    }
}

/// Quintile bins by percentile rank.
///
/// Ties share their average rank `r` (1-based); the percentile is
/// `100·(r − ½)/n`, so a fully tied list lands on the 50th percentile.
pub fn bin_expectancy(values: &[f64]) -> Vec<ExpectancyBin> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let twice_ranks = twice_average_ranks(values);
    twice_ranks
        .into_iter()
        .map(|r2| {
            // percentile / 20 = 5·(2r − 1) / (2n), evaluated exactly
            let idx = (5 * (r2 - 1) / (2 * n)).min(4);
            ExpectancyBin::ALL[idx]
        })
        .collect()
}

/// Bins with `None` (expectancy undefined) mapped to `Medium` and left out
/// of the ranking.
pub fn bin_optional(values: &[Option<f64>]) -> Vec<ExpectancyBin> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let mut bins = bin_expectancy(&defined).into_iter();
    values
        .iter()
        .map(|v| match v {
            Some(_) => bins.next().expect("one bin per defined value"),
            None => ExpectancyBin::Medium,
        })
        .collect()
}

/// Twice the 1-based average rank of each value (keeps ranks integral).
fn twice_average_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end+1 averaged, doubled
        let twice = start + 1 + end + 1;
        for &idx in &order[start..=end] {
            ranks[idx] = twice;
        }
        start = end + 1;
    }
    ranks
}

/// Most frequent non-X symbol; ties go to the earlier symbol in
/// P > D > ID > IP > VP > R > IR > VR. All-X (or empty) gives X.
pub fn dominant_symbol<I: IntoIterator<Item = IrSymbol>>(symbols: I) -> IrSymbol {
    let mut counts: BTreeMap<IrSymbol, usize> = BTreeMap::new();
    for s in symbols.into_iter().filter(|s| *s != IrSymbol::X) {
        *counts.entry(s).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|(a, ca), (b, cb)| ca.cmp(cb).then(b.precedence().cmp(&a.precedence())))
        .map(|(s, _)| s)
        .unwrap_or(IrSymbol::X)
}
