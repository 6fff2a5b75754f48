//! Score ingestion: MusicXML → note matrix.
//!
//! A [`NoteMatrix`] holds one row per sounding note of a monophonic line,
//! with onsets kept as exact rationals in quarter-note beats. The CSV
//! interchange format writes the columns
//! `onset_global, onset_measure, duration, midi_pitch, pitch_class, octave,
//! beat_strength, ir_symbol` in that order.

mod csv;
mod manifest;
mod meter;
mod musicxml;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::IrSymbol;

pub use self::csv::{format_beats, matrix_from_csv, matrix_to_csv, parse_beats};
pub use self::manifest::{CorpusManifest, PieceEntry};
pub use self::meter::{beat_strength, TimeSignature, BEAT_STRENGTH_FLOOR};
pub use self::musicxml::{parse_musicxml, parse_score, ParsedPart, ParsedScore};

/// Quarter-note beats, exact.
pub type Beats = Rational64;

#[derive(Error, Debug)]
pub enum IngestError {
    #[error("malformed XML at line {line}: {message}")]
    Xml { line: u32, message: String },

    #[error("invalid MusicXML at line {line}: {message}")]
    Invalid { line: u32, message: String },

    #[error("unsupported MusicXML feature <{element}> at line {line}: {detail}")]
    Unsupported {
        element: String,
        line: u32,
        detail: String,
    },

    #[error("score contains no pitched notes")]
    EmptyScore,

    #[error("part `{0}` not found in score")]
    UnknownPart(String),

    #[error("onset {onset} lies outside a measure of length {measure_length}")]
    OnsetOutOfRange {
        onset: String,
        measure_length: String,
    },

    #[error("CSV line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One note row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset_global: Beats,
    pub onset_in_measure: Beats,
    pub duration: Beats,
    pub midi_pitch: u8,
    pub pitch_class: u8,
    pub octave: i8,
    pub beat_strength: f64,
    pub ir_symbol: Option<IrSymbol>,
}

impl NoteEvent {
    /// Builds an event, deriving pitch class and octave from the MIDI number.
    pub fn new(
        onset_global: Beats,
        onset_in_measure: Beats,
        duration: Beats,
        midi_pitch: u8,
        beat_strength: f64,
    ) -> Self {
        Self {
            onset_global,
            onset_in_measure,
            duration,
            midi_pitch,
            pitch_class: midi_pitch % 12,
            octave: (midi_pitch / 12) as i8 - 1,
            beat_strength,
            ir_symbol: None,
        }
    }

    pub fn end(&self) -> Beats {
        self.onset_global + self.duration
    }

    #[cfg(test)]
    fn order_key(&self) -> (Beats, u8) {
        (self.onset_global, self.midi_pitch)
    }
}

/// The ordered note rows of one piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteMatrix {
    pub piece_id: String,
    pub composer: String,
    pub events: Vec<NoteEvent>,
    /// Divisions per quarter note declared by the first part.
    pub divisions: i64,
    /// `(measure index, signature)` at each change.
    pub time_signatures: Vec<(usize, TimeSignature)>,
}

impl NoteMatrix {
    pub fn new(piece_id: impl Into<String>, composer: impl Into<String>) -> Self {
        Self {
            piece_id: piece_id.into(),
            composer: composer.into(),
            events: Vec::new(),
            divisions: 1,
            time_signatures: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn pitches(&self) -> Vec<u8> {
        self.events.iter().map(|e| e.midi_pitch).collect()
    }

    #[cfg(test)]
    pub(crate) fn sort_events(&mut self) {
        self.events.sort_by_key(NoteEvent::order_key);
    }

    /// True when no two events share an onset.
    pub fn is_monophonic(&self) -> bool {
        self.events
            .windows(2)
            .all(|w| w[0].onset_global < w[1].onset_global)
    }
}

/// Which line of a polyphonic score is kept.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MelodyRule {
    #[default]
    Highest,
    Lowest,
    /// Keep one named part (by MusicXML part id), then take its highest
    /// pitch at each onset.
    Part(String),
}

impl std::str::FromStr for MelodyRule {
    type Err = String;

    /// `highest`, `lowest` or `part:<id>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "highest" => Ok(Self::Highest),
            "lowest" => Ok(Self::Lowest),
            other => match other.strip_prefix("part:") {
                Some(id) if !id.is_empty() => Ok(Self::Part(id.to_string())),
                _ => Err(format!("unknown melody rule `{other}` (highest | lowest | part:<id>)")),
            },
        }
    }
}

impl TryFrom<String> for MelodyRule {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<MelodyRule> for String {
    fn from(rule: MelodyRule) -> Self {
        match rule {
            MelodyRule::Highest => "highest".into(),
            MelodyRule::Lowest => "lowest".into(),
            MelodyRule::Part(id) => format!("part:{id}"),
        }
    }
}

/// Reduces simultaneous onsets to one note each.
///
/// `Part` selection needs part information and is therefore applied by
/// [`ParsedScore::select`]; on a bare matrix it behaves like `Highest`.
pub fn select_melody(matrix: &NoteMatrix, rule: &MelodyRule) -> NoteMatrix {
    let mut by_onset: BTreeMap<Beats, NoteEvent> = BTreeMap::new();
    for event in &matrix.events {
        match by_onset.get(&event.onset_global) {
            Some(kept) if !prefer(event, kept, rule) => {}
            _ => {
                by_onset.insert(event.onset_global, event.clone());
            }
        }
    }
    NoteMatrix {
        events: by_onset.into_values().collect(),
        ..matrix.clone()
    }
}

fn prefer(candidate: &NoteEvent, kept: &NoteEvent, rule: &MelodyRule) -> bool {
    let ord = candidate.midi_pitch.cmp(&kept.midi_pitch);
    match rule {
        MelodyRule::Lowest => ord == Ordering::Less,
        MelodyRule::Highest | MelodyRule::Part(_) => ord == Ordering::Greater,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(onset: i64, pitch: u8) -> NoteEvent {
        NoteEvent::new(Beats::from(onset), Beats::from(onset), Beats::from(1), pitch, 1.0)
    }

    fn matrix(events: Vec<NoteEvent>) -> NoteMatrix {
        let mut m = NoteMatrix::new("t", "anon");
        m.events = events;
        m.sort_events();
        m
    }

    #[test]
    fn chord_keeps_highest() {
        let m = matrix(vec![ev(0, 60), ev(0, 64), ev(0, 67)]);
        let sel = select_melody(&m, &MelodyRule::Highest);
        assert_eq!(sel.pitches(), vec![67]);
        let low = select_melody(&m, &MelodyRule::Lowest);
        assert_eq!(low.pitches(), vec![60]);
    }

    #[test]
    fn monophonic_is_identity() {
        let m = matrix(vec![ev(0, 60), ev(1, 62), ev(2, 59)]);
        assert_eq!(select_melody(&m, &MelodyRule::Highest), m);
    }

    #[test]
    fn crossing_voices_follow_top_line() {
        // upper voice 72 70 65 64, lower voice 60 67 69 62 (crosses at onsets 2)
        let upper = [72, 70, 65, 64];
        let lower = [60, 67, 69, 62];
        let mut events = Vec::new();
        for (t, (&u, &l)) in upper.iter().zip(&lower).enumerate() {
            events.push(ev(t as i64, u));
            events.push(ev(t as i64, l));
        }
        let m = matrix(events);
        let expected: Vec<u8> = upper.iter().zip(&lower).map(|(&u, &l)| u.max(l)).collect();
        assert_eq!(select_melody(&m, &MelodyRule::Highest).pitches(), expected);
        assert_eq!(expected, vec![72, 70, 69, 64]);
    }

    #[test]
    fn pitch_class_and_octave_follow_midi() {
        for p in 0..=127u8 {
            let e = ev(0, p);
            assert_eq!(e.pitch_class, p % 12);
            assert_eq!(e.octave as i32, (p as i32).div_euclid(12) - 1);
        }
    }
}
