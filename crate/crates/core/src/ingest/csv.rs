//! CSV interchange for note matrices.

use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{Signed, Zero};

use super::{Beats, IngestError, NoteEvent, NoteMatrix};
use crate::annotate::IrSymbol;

pub const NOTE_MATRIX_HEADER: [&str; 8] = [
    "onset_global",
    "onset_measure",
    "duration",
    "midi_pitch",
    "pitch_class",
    "octave",
    "beat_strength",
    "ir_symbol",
];

/// Renders beats as a terminating decimal when one exists, else as `p/q`.
pub fn format_beats(value: Beats) -> String {
    let mut denom = *value.denom();
    while denom % 2 == 0 {
        denom /= 2;
    }
    while denom % 5 == 0 {
        denom /= 5;
    }
    if denom != 1 {
        return format!("{}/{}", value.numer(), value.denom());
    }
    let sign = if value.is_negative() { "-" } else { "" };
    let abs = value.abs();
    let whole = abs.trunc().to_integer();
    let mut frac = abs.fract();
    if frac.is_zero() {
        return format!("{sign}{whole}");
    }
    let mut digits = String::new();
    while !frac.is_zero() {
        frac *= Rational64::from(10);
        let d = frac.trunc().to_integer();
        digits.push(char::from(b'0' + d as u8));
        frac = frac.fract();
    }
    format!("{sign}{whole}.{digits}")
}

/// Parses `3`, `3.25` or `7/3` into exact beats.
pub fn parse_beats(text: &str) -> Option<Beats> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n = i64::from_str(n.trim()).ok()?;
        let d = i64::from_str(d.trim()).ok()?;
        return (d != 0).then(|| Rational64::new(n, d));
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    let whole = if whole.is_empty() { 0 } else { i64::from_str(whole).ok()? };
    let mut value = Rational64::from(whole);
    if !frac.is_empty() {
        if !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 15 {
            return None;
        }
        let scale = 10i64.pow(frac.len() as u32);
        value += Rational64::new(i64::from_str(frac).ok()?, scale);
    }
    Some(if negative { -value } else { value })
}

/// Writes the event rows with the standard header.
pub fn matrix_to_csv(matrix: &NoteMatrix) -> String {
    let mut writer = ::csv::Writer::from_writer(Vec::new());
    writer
        .write_record(NOTE_MATRIX_HEADER)
        .expect("writing to memory");
    for e in &matrix.events {
        writer
            .write_record([
                format_beats(e.onset_global),
                format_beats(e.onset_in_measure),
                format_beats(e.duration),
                e.midi_pitch.to_string(),
                e.pitch_class.to_string(),
                e.octave.to_string(),
                e.beat_strength.to_string(),
                e.ir_symbol.map(|s| s.as_str().to_string()).unwrap_or_default(),
            ])
            .expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("flush to memory")).expect("utf8 output")
}

/// Reads rows written by [`matrix_to_csv`]. Metadata that the CSV does not
/// carry (ids, divisions, meters) comes from the caller.
pub fn matrix_from_csv(
    text: &str,
    piece_id: &str,
    composer: &str,
) -> Result<NoteMatrix, IngestError> {
    let mut reader = ::csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| IngestError::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != NOTE_MATRIX_HEADER {
        return Err(IngestError::Csv {
            line: 1,
            message: format!("unexpected header {:?}", headers),
        });
    }
    let mut matrix = NoteMatrix::new(piece_id, composer);
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| IngestError::Csv { line, message };
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != NOTE_MATRIX_HEADER.len() {
            return Err(bad(format!("expected 8 fields, got {}", record.len())));
        }
        let beats = |idx: usize| {
            parse_beats(&record[idx]).ok_or_else(|| bad(format!("bad beats `{}`", &record[idx])))
        };
        let midi: u8 = record[3]
            .parse()
            .map_err(|_| bad(format!("bad midi pitch `{}`", &record[3])))?;
        if midi > 127 {
            return Err(bad(format!("midi pitch {midi} out of range")));
        }
        let strength: f64 = record[6]
            .parse()
            .map_err(|_| bad(format!("bad beat strength `{}`", &record[6])))?;
        let mut event = NoteEvent::new(beats(0)?, beats(1)?, beats(2)?, midi, strength);
        if record[4] != *event.pitch_class.to_string() || record[5] != *event.octave.to_string() {
            return Err(bad("pitch class/octave disagree with midi pitch".into()));
        }
        if !record[7].is_empty() {
            event.ir_symbol = Some(
                record[7]
                    .parse::<IrSymbol>()
                    .map_err(|_| bad(format!("unknown I-R symbol `{}`", &record[7])))?,
            );
        }
        matrix.events.push(event);
    }
    Ok(matrix)
}
