//! Partwise MusicXML reader.
//!
//! Supports the timing subset needed for melodic analysis: `divisions`,
//! `time`, `backup`, `forward`, chords, ties, rests, grace and cue notes,
//! and tuplets nested at most two deep.

use std::collections::HashMap;

use num_rational::Rational64;
use num_traits::Zero;
use roxmltree::{Document, Node};

use super::meter::beat_strength;
use super::{select_melody, Beats, IngestError, MelodyRule, NoteEvent, NoteMatrix, TimeSignature};

const MAX_TUPLET_DEPTH: i32 = 2;

/// Pitched notes of one `<part>`, ties merged, chords kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPart {
    pub id: String,
    pub events: Vec<NoteEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedScore {
    pub title: Option<String>,
    pub composer: Option<String>,
    pub parts: Vec<ParsedPart>,
    pub divisions: i64,
    pub time_signatures: Vec<(usize, TimeSignature)>,
}

impl ParsedScore {
    /// All parts merged into one (possibly polyphonic) matrix.
    pub fn raw_matrix(&self, piece_id: &str, composer: &str) -> NoteMatrix {
        let events = self.parts.iter().flat_map(|p| p.events.iter().cloned()).collect();
        self.matrix_from(events, piece_id, composer)
    }

    /// Applies the melody rule and returns the monophonic line.
    pub fn select(
        &self,
        rule: &MelodyRule,
        piece_id: &str,
        composer: &str,
    ) -> Result<NoteMatrix, IngestError> {
        let raw = match rule {
            MelodyRule::Part(id) => {
                let part = self
                    .parts
                    .iter()
                    .find(|p| &p.id == id)
                    .ok_or_else(|| IngestError::UnknownPart(id.clone()))?;
                self.matrix_from(part.events.clone(), piece_id, composer)
            }
            _ => self.raw_matrix(piece_id, composer),
        };
        let selected = select_melody(&raw, rule);
        if selected.is_empty() {
            return Err(IngestError::EmptyScore);
        }
        Ok(selected)
    }

    fn matrix_from(&self, mut events: Vec<NoteEvent>, piece_id: &str, composer: &str) -> NoteMatrix {
        events.sort_by(|a, b| {
            (a.onset_global, a.midi_pitch, std::cmp::Reverse(a.duration)).cmp(&(
                b.onset_global,
                b.midi_pitch,
                std::cmp::Reverse(b.duration),
            ))
        });
        // unison doublings across parts: keep the longest
        events.dedup_by(|later, earlier| {
            later.onset_global == earlier.onset_global && later.midi_pitch == earlier.midi_pitch
        });
        NoteMatrix {
            piece_id: piece_id.to_string(),
            composer: composer.to_string(),
            events,
            divisions: self.divisions,
            time_signatures: self.time_signatures.clone(),
        }
    }
}

/// Parses a document and keeps the highest pitch at each onset.
///
/// The piece id and composer default to the work title and the composer
/// creator when the document declares them.
pub fn parse_musicxml(document: &str) -> Result<NoteMatrix, IngestError> {
    let score = parse_score(document)?;
    let title = score.title.clone().unwrap_or_default();
    let composer = score.composer.clone().unwrap_or_default();
    score.select(&MelodyRule::Highest, &title, &composer)
}

/// Parses every part of a partwise score.
pub fn parse_score(document: &str) -> Result<ParsedScore, IngestError> {
    let doc = Document::parse(document).map_err(|e| IngestError::Xml {
        line: e.pos().row,
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    let ctx = Ctx { doc: &doc };
    match root.tag_name().name() {
        "score-partwise" => {}
        "score-timewise" => {
            return Err(IngestError::Unsupported {
                element: "score-timewise".into(),
                line: ctx.line(root),
                detail: "only partwise scores are read".into(),
            })
        }
        other => {
            return Err(IngestError::Invalid {
                line: ctx.line(root),
                message: format!("root element <{other}> is not <score-partwise>"),
            })
        }
    }

    let title = root
        .descendants()
        .find(|n| n.has_tag_name("work-title") || n.has_tag_name("movement-title"))
        .and_then(|n| n.text())
        .map(|t| t.trim().to_string());
    let composer = root
        .descendants()
        .find(|n| n.has_tag_name("creator") && n.attribute("type") == Some("composer"))
        .and_then(|n| n.text())
        .map(|t| t.trim().to_string());

    let mut parts = Vec::new();
    let mut divisions = None;
    let mut time_signatures = None;
    for part in root.children().filter(|n| n.has_tag_name("part")) {
        let id = part.attribute("id").unwrap_or("").to_string();
        let parsed = PartReader::new(ctx).read(part)?;
        divisions.get_or_insert(parsed.first_divisions);
        time_signatures.get_or_insert(parsed.time_signatures);
        parts.push(ParsedPart {
            id,
            events: parsed.events,
        });
    }
    if parts.iter().all(|p| p.events.is_empty()) {
        return Err(IngestError::EmptyScore);
    }
    Ok(ParsedScore {
        title,
        composer,
        parts,
        divisions: divisions.unwrap_or(1),
        time_signatures: time_signatures.unwrap_or_default(),
    })
}

#[derive(Clone, Copy)]
struct Ctx<'a, 'input> {
    doc: &'a Document<'input>,
}

impl Ctx<'_, '_> {
    fn line(&self, node: Node) -> u32 {
        self.doc.text_pos_at(node.range().start).row
    }

    fn invalid(&self, node: Node, message: impl Into<String>) -> IngestError {
        IngestError::Invalid {
            line: self.line(node),
            message: message.into(),
        }
    }

    fn child_text<'n>(&self, node: Node<'n, 'n>, tag: &str) -> Option<&'n str> {
        node.children()
            .find(|c| c.has_tag_name(tag))
            .and_then(|c| c.text())
            .map(str::trim)
    }

    fn child_int(&self, node: Node, tag: &str) -> Result<Option<i64>, IngestError> {
        match self.child_text(node, tag) {
            None => Ok(None),
            Some(t) => t
                .parse::<i64>()
                .map(Some)
                .map_err(|_| self.invalid(node, format!("<{tag}> is not an integer: `{t}`"))),
        }
    }
}

struct PartOutput {
    events: Vec<NoteEvent>,
    first_divisions: i64,
    time_signatures: Vec<(usize, TimeSignature)>,
}

struct PartReader<'a, 'input> {
    ctx: Ctx<'a, 'input>,
    divisions: Option<i64>,
    first_divisions: Option<i64>,
    time: TimeSignature,
    time_signatures: Vec<(usize, TimeSignature)>,
    events: Vec<NoteEvent>,
    /// (voice, midi) → index of the event a tie continues.
    open_ties: HashMap<(String, u8), usize>,
    tuplet_depth: i32,
}

impl<'a, 'input> PartReader<'a, 'input> {
    fn new(ctx: Ctx<'a, 'input>) -> Self {
        Self {
            ctx,
            divisions: None,
            first_divisions: None,
            time: TimeSignature::default(),
            time_signatures: Vec::new(),
            events: Vec::new(),
            open_ties: HashMap::new(),
            tuplet_depth: 0,
        }
    }

    fn read(mut self, part: Node) -> Result<PartOutput, IngestError> {
        let mut measure_start = Beats::zero();
        for (index, measure) in part.children().filter(|n| n.has_tag_name("measure")).enumerate() {
            let length = self.read_measure(measure, index, measure_start)?;
            measure_start += length;
        }
        Ok(PartOutput {
            events: self.events,
            first_divisions: self.first_divisions.unwrap_or(1),
            time_signatures: self.time_signatures,
        })
    }

    /// Returns the measure's actual length in beats.
    fn read_measure(
        &mut self,
        measure: Node,
        index: usize,
        measure_start: Beats,
    ) -> Result<Beats, IngestError> {
        let mut cursor = Beats::zero();
        let mut furthest = Beats::zero();
        let mut last_onset = Beats::zero();
        let mut created: Vec<(usize, Beats)> = Vec::new();
        let mut saw_timed_content = false;

        for child in measure.children().filter(Node::is_element) {
            match child.tag_name().name() {
                "attributes" => self.read_attributes(child, index)?,
                "backup" => {
                    cursor -= self.duration_of(child)?;
                    if cursor < Beats::zero() {
                        return Err(self.ctx.invalid(child, "<backup> moves before measure start"));
                    }
                }
                "forward" => {
                    cursor += self.duration_of(child)?;
                    saw_timed_content = true;
                }
                "note" => {
                    if child.children().any(|c| c.has_tag_name("grace")) {
                        continue;
                    }
                    self.track_tuplets(child)?;
                    let duration = self.duration_of(child)?;
                    let is_chord = child.children().any(|c| c.has_tag_name("chord"));
                    let onset = if is_chord { last_onset } else { cursor };
                    if !is_chord {
                        last_onset = cursor;
                        cursor += duration;
                    }
                    saw_timed_content = true;
                    furthest = furthest.max(onset + duration).max(cursor);

                    let is_cue = child.children().any(|c| c.has_tag_name("cue"));
                    let Some(pitch_node) = child.children().find(|c| c.has_tag_name("pitch")) else {
                        continue;
                    };
                    if is_cue {
                        continue;
                    }
                    let midi = self.midi_of(pitch_node)?;
                    if let Some(idx) = self.place_note(child, measure_start + onset, duration, midi) {
                        created.push((idx, onset));
                    }
                }
                _ => {}
            }
            furthest = furthest.max(cursor);
        }

        let meter_length = self.time.measure_length();
        let length = if saw_timed_content { furthest } else { meter_length };
        // a short opening measure is a pickup: align it to the end of the bar
        let shift = if index == 0 && length < meter_length {
            meter_length - length
        } else {
            Beats::zero()
        };
        for (idx, onset) in created {
            let in_measure = onset + shift;
            let event = &mut self.events[idx];
            event.onset_in_measure = in_measure;
            let metric_pos = wrap(in_measure, meter_length);
            event.beat_strength = beat_strength(metric_pos, self.time)?;
        }
        Ok(length)
    }

    fn read_attributes(&mut self, attrs: Node, index: usize) -> Result<(), IngestError> {
        if let Some(div) = self.ctx.child_int(attrs, "divisions")? {
            if div <= 0 {
                return Err(self.ctx.invalid(attrs, "<divisions> must be positive"));
            }
            self.divisions = Some(div);
            self.first_divisions.get_or_insert(div);
        }
        if let Some(time) = attrs.children().find(|c| c.has_tag_name("time")) {
            if time.children().any(|c| c.has_tag_name("senza-misura")) {
                return Err(IngestError::Unsupported {
                    element: "senza-misura".into(),
                    line: self.ctx.line(time),
                    detail: "unmetered music has no measure grid".into(),
                });
            }
            let beats = self
                .ctx
                .child_text(time, "beats")
                .ok_or_else(|| self.ctx.invalid(time, "<time> without <beats>"))?;
            let numerator = beats
                .split('+')
                .map(|b| b.trim().parse::<u32>())
                .sum::<Result<u32, _>>()
                .map_err(|_| self.ctx.invalid(time, format!("bad <beats> `{beats}`")))?;
            let denominator = self
                .ctx
                .child_int(time, "beat-type")?
                .ok_or_else(|| self.ctx.invalid(time, "<time> without <beat-type>"))?;
            if numerator == 0 || denominator <= 0 {
                return Err(self.ctx.invalid(time, "time signature must be positive"));
            }
            let ts = TimeSignature::new(numerator, denominator as u32);
            if self.time_signatures.last().map(|(_, t)| *t) != Some(ts) {
                self.time_signatures.push((index, ts));
            }
            self.time = ts;
        }
        Ok(())
    }

    fn duration_of(&self, node: Node) -> Result<Beats, IngestError> {
        let divs = self
            .ctx
            .child_int(node, "duration")?
            .ok_or_else(|| self.ctx.invalid(node, format!("<{}> without <duration>", node.tag_name().name())))?;
        if divs < 0 {
            return Err(self.ctx.invalid(node, "negative <duration>"));
        }
        let divisions = self
            .divisions
            .ok_or_else(|| self.ctx.invalid(node, "<duration> before any <divisions>"))?;
        Ok(Rational64::new(divs, divisions))
    }

    fn midi_of(&self, pitch: Node) -> Result<u8, IngestError> {
        let step = self
            .ctx
            .child_text(pitch, "step")
            .ok_or_else(|| self.ctx.invalid(pitch, "<pitch> without <step>"))?;
        let base = match step {
            "C" => 0,
            "D" => 2,
            "E" => 4,
            "F" => 5,
            "G" => 7,
            "A" => 9,
            "B" => 11,
            other => return Err(self.ctx.invalid(pitch, format!("unknown step `{other}`"))),
        };
        let alter = match self.ctx.child_text(pitch, "alter") {
            None => 0,
            Some(a) => {
                let value: f64 = a
                    .parse()
                    .map_err(|_| self.ctx.invalid(pitch, format!("bad <alter> `{a}`")))?;
                if value.fract() != 0.0 {
                    return Err(IngestError::Unsupported {
                        element: "alter".into(),
                        line: self.ctx.line(pitch),
                        detail: format!("microtonal alteration {value}"),
                    });
                }
                value as i64
            }
        };
        let octave = self
            .ctx
            .child_int(pitch, "octave")?
            .ok_or_else(|| self.ctx.invalid(pitch, "<pitch> without <octave>"))?;
        let midi = (octave + 1) * 12 + base + alter;
        u8::try_from(midi)
            .ok()
            .filter(|m| *m <= 127)
            .ok_or_else(|| self.ctx.invalid(pitch, format!("MIDI pitch {midi} out of range")))
    }

    fn track_tuplets(&mut self, note: Node) -> Result<(), IngestError> {
        let tuplets = note
            .children()
            .filter(|c| c.has_tag_name("notations"))
            .flat_map(|n| n.children().filter(|c| c.has_tag_name("tuplet")).collect::<Vec<_>>());
        let mut stops = 0;
        for tuplet in tuplets {
            match tuplet.attribute("type") {
                Some("start") => {
                    self.tuplet_depth += 1;
                    if self.tuplet_depth > MAX_TUPLET_DEPTH {
                        return Err(IngestError::Unsupported {
                            element: "tuplet".into(),
                            line: self.ctx.line(tuplet),
                            detail: format!("nesting depth {} exceeds {MAX_TUPLET_DEPTH}", self.tuplet_depth),
                        });
                    }
                }
                Some("stop") => stops += 1,
                _ => {}
            }
        }
        self.tuplet_depth = (self.tuplet_depth - stops).max(0);
        Ok(())
    }

    /// Adds a note or extends the tie it continues. Returns the index of a
    /// newly created event.
    fn place_note(&mut self, note: Node, onset: Beats, duration: Beats, midi: u8) -> Option<usize> {
        let voice = self.ctx.child_text(note, "voice").unwrap_or("1").to_string();
        let (tie_start, tie_stop) = tie_flags(note);
        let key = (voice, midi);

        if tie_stop {
            if let Some(&idx) = self.open_ties.get(&key) {
                if self.events[idx].end() == onset {
                    self.events[idx].duration += duration;
                    if !tie_start {
                        self.open_ties.remove(&key);
                    }
                    return None;
                }
            }
            log::warn!(
                "line {}: tie stop without a matching start, keeping note separate",
                self.ctx.line(note)
            );
        }
        let idx = self.events.len();
        self.events.push(NoteEvent::new(onset, Beats::zero(), duration, midi, 1.0));
        if tie_start {
            self.open_ties.insert(key, idx);
        } else {
            self.open_ties.remove(&key);
        }
        Some(idx)
    }
}

fn tie_flags(note: Node) -> (bool, bool) {
    let mut start = false;
    let mut stop = false;
    let ties = note.children().filter(|c| c.has_tag_name("tie")).chain(
        note.children()
            .filter(|c| c.has_tag_name("notations"))
            .flat_map(|n| n.children().filter(|c| c.has_tag_name("tied"))),
    );
    for tie in ties {
        match tie.attribute("type") {
            Some("start") => start = true,
            Some("stop") => stop = true,
            _ => {}
        }
    }
    (start, stop)
}

fn wrap(position: Beats, length: Beats) -> Beats {
    let mut p = position;
    while p >= length {
        p -= length;
    }
    p
}
