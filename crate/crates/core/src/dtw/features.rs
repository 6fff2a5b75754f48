use serde::{Deserialize, Serialize};

use crate::hashing::{Hash, StableHasher};
use crate::segment::Segment;

/// Channel weights and normalization mode. Any change here alters the
/// feature hash and invalidates cached distance chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub pitch_weight: f64,
    pub duration_weight: f64,
    pub expectancy_weight: f64,
    /// Divide DTW cost by warping-path length.
    pub normalize_path: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            pitch_weight: 1.0,
            duration_weight: 1.0,
            expectancy_weight: 1.0,
            normalize_path: true,
        }
    }
}

impl FeatureConfig {
    pub fn hash(&self, scaler: &PitchScaler) -> Hash {
        let mut h = StableHasher::new();
        h.str("melograph-features-v1")
            .f64(self.pitch_weight)
            .f64(self.duration_weight)
            .f64(self.expectancy_weight)
            .u64(self.normalize_path as u64)
            .f64(scaler.mean)
            .f64(scaler.sd);
        h.finish()
    }
}

/// Corpus-wide pitch mean and standard deviation for z-scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchScaler {
    pub mean: f64,
    pub sd: f64,
}

impl PitchScaler {
    /// Population statistics over every note of every segment. A constant
    /// corpus gets `sd = 1` so z-scores stay finite.
    pub fn fit<'a>(segments: impl IntoIterator<Item = &'a Segment>) -> Self {
        let pitches: Vec<f64> = segments
            .into_iter()
            .flat_map(|s| s.events.iter().map(|e| e.midi_pitch as f64))
            .collect();
        if pitches.is_empty() {
            return PitchScaler { mean: 0.0, sd: 1.0 };
        }
        let n = pitches.len() as f64;
        let mean = pitches.iter().sum::<f64>() / n;
        let var = pitches.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        PitchScaler { mean, sd }
    }

    pub fn z(&self, pitch: u8) -> f64 {
        (pitch as f64 - self.mean) / self.sd
    }
}

/// One `[pitch_z, log2_duration, expectancy]` frame per note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVectorSequence {
    pub frames: Vec<[f64; 3]>,
}

impl FeatureVectorSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Expectancy used when a segment has no scored note at all.
const NEUTRAL_EXPECTANCY: f64 = 0.5;

/// Builds the frame sequence for a segment. Notes without a triplet take
/// the segment mean expectancy.
pub fn segment_features(
    segment: &Segment,
    scaler: &PitchScaler,
    cfg: &FeatureConfig,
) -> FeatureVectorSequence {
    let fill = segment.expectancy.unwrap_or(NEUTRAL_EXPECTANCY);
    let frames = segment
        .events
        .iter()
        .zip(&segment.note_expectancy)
        .map(|(event, e)| {
            let dur = *event.duration.numer() as f64 / *event.duration.denom() as f64;
            [
                cfg.pitch_weight * scaler.z(event.midi_pitch),
                cfg.duration_weight * dur.log2(),
                cfg.expectancy_weight * e.unwrap_or(fill),
            ]
        })
        .collect();
    FeatureVectorSequence { frames }
}

/// Hash over segment ids and every feature value, in order.
pub fn corpus_hash(ids: &[String], sequences: &[FeatureVectorSequence]) -> Hash {
    let mut h = StableHasher::new();
    h.str("melograph-corpus-v1").u64(ids.len() as u64);
    for (id, seq) in ids.iter().zip(sequences) {
        h.str(id).u64(seq.frames.len() as u64);
        for frame in &seq.frames {
            for v in frame {
                h.f64(*v);
            }
        }
    }
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{annotate, CorpusStats};
    use crate::ingest::{Beats, NoteEvent, NoteMatrix};
    use crate::segment::{segment_piece, SegmenterConfig};

    fn piece(pitches: &[u8]) -> NoteMatrix {
        let mut m = NoteMatrix::new("p", "c");
        m.events = pitches
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                NoteEvent::new(Beats::from(i as i64), Beats::from(0), Beats::new(1, 2), p, 1.0)
            })
            .collect();
        annotate(&m)
    }

    #[test]
    fn frames_match_segment_notes() {
        let m = piece(&[60, 62, 64, 65, 67]);
        let stats = CorpusStats::from_matrices([&m]);
        let segs = segment_piece(&m, &stats, &SegmenterConfig::default());
        let scaler = PitchScaler::fit(&segs);
        assert!((scaler.mean - 63.6).abs() < 1e-12);
        let cfg = FeatureConfig::default();
        for s in &segs {
            let f = segment_features(s, &scaler, &cfg);
            assert_eq!(f.len(), s.len());
            assert!(f.frames.iter().flatten().all(|v| v.is_finite()));
            assert!(f.frames.iter().all(|fr| fr[1] == -1.0));
            // boundary notes inherit the segment mean
            assert_eq!(f.frames[0][2], s.expectancy.unwrap());
        }
    }

    #[test]
    fn hash_tracks_config() {
        let scaler = PitchScaler { mean: 60.0, sd: 2.0 };
        let a = FeatureConfig::default();
        let b = FeatureConfig { normalize_path: false, ..a.clone() };
        assert_ne!(a.hash(&scaler), b.hash(&scaler));
        assert_eq!(a.hash(&scaler), a.clone().hash(&scaler));
    }

    #[test]
    fn constant_corpus_scaler_is_finite() {
        let m = piece(&[60, 60, 60]);
        let stats = CorpusStats::from_matrices([&m]);
        let segs = segment_piece(&m, &stats, &SegmenterConfig::default());
        let scaler = PitchScaler::fit(&segs);
        assert_eq!(scaler.sd, 1.0);
        assert_eq!(scaler.z(60), 0.0);
    }
}
