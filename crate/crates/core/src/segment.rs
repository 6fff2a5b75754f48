//! Temporal Gestalt segmentation: notes → clangs → segments.
//!
//! Both levels cut at local maxima of a weighted distance between
//! successive units. Between notes it is
//! `w_pitch·|Δpitch| + w_onset·(inter-onset interval + rest gap)`; between
//! clangs the same form is applied to (mean pitch, first onset).

use std::fmt;
use std::ops::Range;

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::annotate::{
    bin_optional, dominant_symbol, matrix_expectancies, segment_expectancy, CorpusStats,
    ExpectancyBin, IrSymbol,
};
use crate::ingest::{Beats, NoteEvent, NoteMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    /// Weight per semitone.
    pub w_pitch: f64,
    /// Weight per beat of inter-onset interval and rest.
    pub w_onset: f64,
    pub min_notes: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            w_pitch: 1.0,
            w_onset: 2.0,
            min_notes: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentId {
    pub piece_id: String,
    pub ordinal: usize,
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.piece_id, self.ordinal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    /// Note index range within the piece's matrix.
    pub start: usize,
    pub end: usize,
    pub events: Vec<NoteEvent>,
    /// Note-level expectancy, `None` for boundary notes of the piece.
    pub note_expectancy: Vec<Option<f64>>,
    /// Mean note expectancy; `None` when every member lacks a triplet.
    pub expectancy: Option<f64>,
    pub dominant: IrSymbol,
    /// Corpus-wide quintile, set by [`assign_bins`].
    pub bin: Option<ExpectancyBin>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `Bin|Symbol`, once the bin is known.
    pub fn label(&self) -> Option<String> {
        self.bin.map(|b| format!("{}|{}", b, self.dominant))
    }
}

fn beats_f64(b: Beats) -> f64 {
    b.to_f64().expect("finite rational")
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Indices of local maxima in `d`. A maximum needs a strictly smaller value
/// on both sides; a plateau that qualifies reports its first index.
pub fn local_maxima(d: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < d.len() {
        if d[i] > d[i - 1] && !approx_eq(d[i], d[i - 1]) {
            let mut j = i;
            while j + 1 < d.len() && approx_eq(d[j + 1], d[i]) {
                j += 1;
            }
            if j + 1 < d.len() && d[j + 1] < d[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Distances between successive notes.
pub fn note_distances(matrix: &NoteMatrix, w_pitch: f64, w_onset: f64) -> Vec<f64> {
    matrix
        .events
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let ioi = b.onset_global - a.onset_global;
            let gap = (b.onset_global - a.end()).max(Beats::from(0));
            w_pitch * (b.midi_pitch as f64 - a.midi_pitch as f64).abs()
                + w_onset * beats_f64(ioi + gap)
        })
        .collect()
}

/// First note index of every clang after the first. Fewer than three
/// notes give no boundaries.
pub fn clang_boundaries(matrix: &NoteMatrix, w_pitch: f64, w_onset: f64) -> Vec<usize> {
    if matrix.len() < 3 {
        return Vec::new();
    }
    let d = note_distances(matrix, w_pitch, w_onset);
    local_maxima(&d).into_iter().map(|i| i + 1).collect()
}

/// Cuts `0..len` at the given starts.
pub fn ranges_from_boundaries(len: usize, boundaries: &[usize]) -> Vec<Range<usize>> {
    let mut ranges = Vec::with_capacity(boundaries.len() + 1);
    let mut start = 0;
    for &b in boundaries {
        if b > start && b < len {
            ranges.push(start..b);
            start = b;
        }
    }
    if start < len || len == 0 {
        ranges.push(start..len);
    }
    ranges
}

struct ClangSummary {
    mean_pitch: f64,
    first_onset: Beats,
    end: Beats,
}

fn summarize(matrix: &NoteMatrix, clang: &Range<usize>) -> ClangSummary {
    let notes = &matrix.events[clang.clone()];
    let mean_pitch =
        notes.iter().map(|e| e.midi_pitch as f64).sum::<f64>() / notes.len() as f64;
    ClangSummary {
        mean_pitch,
        first_onset: notes[0].onset_global,
        end: notes.iter().map(NoteEvent::end).max().expect("nonempty clang"),
    }
}

/// Distances between successive clangs.
pub fn clang_distances(matrix: &NoteMatrix, clangs: &[Range<usize>], cfg: &SegmenterConfig) -> Vec<f64> {
    let summaries: Vec<_> = clangs.iter().map(|c| summarize(matrix, c)).collect();
    summaries
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let ioi = b.first_onset - a.first_onset;
            let gap = (b.first_onset - a.end).max(Beats::from(0));
            cfg.w_pitch * (b.mean_pitch - a.mean_pitch).abs() + cfg.w_onset * beats_f64(ioi + gap)
        })
        .collect()
}

/// Groups whole clangs into segments and enforces `min_notes`.
///
/// Undersized segments merge into the neighbour across the smaller clang
/// distance. A piece shorter than `min_notes` stays one segment.
pub fn segment_ranges(
    matrix: &NoteMatrix,
    clangs: &[Range<usize>],
    cfg: &SegmenterConfig,
) -> Vec<Range<usize>> {
    if clangs.is_empty() {
        return Vec::new();
    }
    let d = clang_distances(matrix, clangs, cfg);
    // segments as clang index ranges
    let mut starts: Vec<usize> = vec![0];
    starts.extend(local_maxima(&d).into_iter().map(|j| j + 1));
    let groups: Vec<Range<usize>> = starts
        .iter()
        .enumerate()
        .map(|(k, &s)| s..starts.get(k + 1).copied().unwrap_or(clangs.len()))
        .collect();

    let notes_in = |g: &Range<usize>| clangs[g.start].start..clangs[g.end - 1].end;
    let groups = merge_undersized(groups, &d, |g| notes_in(g).len(), cfg.min_notes);
    groups.iter().map(notes_in).collect()
}

/// Merges clang groups holding fewer than `min_notes` notes into the
/// neighbour across the smaller clang distance (`d[j]` separates clang `j`
/// from clang `j + 1`).
fn merge_undersized(
    mut groups: Vec<Range<usize>>,
    d: &[f64],
    notes: impl Fn(&Range<usize>) -> usize,
    min_notes: usize,
) -> Vec<Range<usize>> {
    while groups.len() > 1 {
        let Some(small) = groups.iter().position(|g| notes(g) < min_notes) else {
            break;
        };
        let left = (small > 0).then(|| d[groups[small].start - 1]);
        let right = (small + 1 < groups.len()).then(|| d[groups[small].end - 1]);
        let merge_left = match (left, right) {
            (Some(l), Some(r)) => l <= r,
            (Some(_), None) => true,
            _ => false,
        };
        let g = groups.remove(small);
        if merge_left {
            groups[small - 1].end = g.end;
        } else {
            groups[small].start = g.start;
        }
    }
    groups
}

/// Segments one annotated piece and fills expectancy and dominant symbol.
pub fn segment_piece(matrix: &NoteMatrix, stats: &CorpusStats, cfg: &SegmenterConfig) -> Vec<Segment> {
    let boundaries = clang_boundaries(matrix, cfg.w_pitch, cfg.w_onset);
    let clangs = ranges_from_boundaries(matrix.len(), &boundaries);
    let ranges = if matrix.is_empty() {
        Vec::new()
    } else {
        segment_ranges(matrix, &clangs, cfg)
    };
    let expectancies: Vec<Option<f64>> = matrix_expectancies(matrix, stats)
        .into_iter()
        .map(|s| s.map(|s| s.e))
        .collect();
    ranges
        .into_iter()
        .enumerate()
        .map(|(ordinal, r)| {
            let events = matrix.events[r.clone()].to_vec();
            let note_expectancy = expectancies[r.clone()].to_vec();
            Segment {
                id: SegmentId {
                    piece_id: matrix.piece_id.clone(),
                    ordinal,
                },
                start: r.start,
                end: r.end,
                expectancy: segment_expectancy(&note_expectancy),
                dominant: dominant_symbol(events.iter().map(|e| e.ir_symbol.unwrap_or(IrSymbol::X))),
                events,
                note_expectancy,
                bin: None,
            }
        })
        .collect()
}

/// Bins every segment's expectancy against all segments of the corpus.
pub fn assign_bins(pieces: &mut [Vec<Segment>]) {
    let values: Vec<Option<f64>> = pieces.iter().flatten().map(|s| s.expectancy).collect();
    let bins = bin_optional(&values);
    for (segment, bin) in pieces.iter_mut().flatten().zip(bins) {
        segment.bin = Some(bin);
    }
}

/// One row of the per-piece segment listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentListing {
    pub segment_id: String,
    pub start: usize,
    pub end: usize,
    pub expectancy: Option<f64>,
    pub dominant: IrSymbol,
    pub label: Option<String>,
}

pub fn listing(segments: &[Segment]) -> Vec<SegmentListing> {
    segments
        .iter()
        .map(|s| SegmentListing {
            segment_id: s.id.to_string(),
            start: s.start,
            end: s.end,
            expectancy: s.expectancy,
            dominant: s.dominant,
            label: s.label(),
        })
        .collect()
}
