//! Synthetic corpora with planted melodic styles.
//!
//! Each style is a family of motifs sharing one interval profile and one
//! rhythm. A piece is a chain of phrases drawn from its style's motifs,
//! transposed and lightly ornamented, each phrase split into two gestures
//! by a short rest and closed by a longer one.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{CorpusManifest, IngestError, MelodyRule, PieceEntry};

/// Sixteenth notes per quarter.
const DIVISIONS: u32 = 4;
const MEASURE: u32 = 16;

struct Style {
    name: &'static str,
    motifs: &'static [&'static [i8]],
    /// Durations in sixteenths, cycled over the motif's notes.
    rhythm: &'static [u32],
}

const STYLES: [Style; 5] = [
    Style {
        name: "scalar",
        motifs: &[&[2, 2, 1, 2, -2, -1, -2], &[-2, -1, -2, -2, 2, 2, 1], &[1, 2, 2, 2, 2, -2, -2]],
        rhythm: &[2, 2, 2, 2, 2, 2, 2, 4],
    },
    Style {
        name: "repeated",
        motifs: &[&[0, 0, 2, 0, 0, -2, 0], &[0, 0, 0, 1, 0, 0, -1], &[0, -2, 0, 0, 2, 0, 0]],
        rhythm: &[4, 2, 2, 4, 2, 2, 4, 8],
    },
    Style {
        name: "leaping",
        motifs: &[&[9, -2, 9, -3, 8, -2, -9], &[-8, 2, -9, 3, -7, 2, 8], &[8, -3, 9, -2, -7, 2, -8]],
        rhythm: &[6, 2, 6, 2, 6, 2, 4, 4],
    },
    Style {
        name: "arpeggiated",
        motifs: &[&[2, 7, 2, 7, -2, -7, -2], &[-2, -7, -2, -7, 2, 7, 2], &[3, 8, 2, -7, -2, -3, 7]],
        rhythm: &[3, 3, 2, 4, 3, 3, 2, 4],
    },
    Style {
        name: "zigzag",
        motifs: &[&[2, -2, 2, -2, 3, -2, 3], &[-2, 2, -3, 2, -2, 2, -2], &[3, -2, 3, -3, 2, -2, 2]],
        rhythm: &[1, 1, 1, 1, 2, 2, 4, 4],
    },
];

pub const MAX_STYLES: usize = STYLES.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub pieces: usize,
    pub styles: usize,
    pub seed: u64,
    pub phrases: usize,
    /// Chance per note of a neighbour-note ornament.
    pub ornament_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { pieces: 10, styles: 5, seed: 7, phrases: 16, ornament_rate: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPiece {
    pub piece_id: String,
    pub style: usize,
    pub style_name: String,
    pub musicxml: String,
}

/// A note or rest on the sixteenth grid.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    duration: u32,
    pitch: Option<u8>,
}

/// Style of piece `i`: consecutive blocks of equal size.
pub fn style_of(i: usize, pieces: usize, styles: usize) -> usize {
    (i * styles / pieces.max(1)).min(styles.saturating_sub(1))
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthPiece>, String> {
    if cfg.styles == 0 || cfg.styles > MAX_STYLES {
        return Err(format!("styles must be between 1 and {MAX_STYLES}"));
    }
    if cfg.pieces < cfg.styles {
        return Err("need at least one piece per style".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut variant = vec![0usize; cfg.styles];
    (0..cfg.pieces)
        .map(|i| {
            let s = style_of(i, cfg.pieces, cfg.styles);
            variant[s] += 1;
            let style = &STYLES[s];
            let piece_id = format!("{}_{}", style.name, variant[s]);
            let slots = compose(style, cfg, &mut rng);
            Ok(SynthPiece {
                musicxml: render_musicxml(&piece_id, style.name, &slots),
                piece_id,
                style: s,
                style_name: style.name.to_string(),
            })
        })
        .collect()
}

fn compose(style: &Style, cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<Slot> {
    let base: i32 = rng.random_range(60..68);
    let mut slots = Vec::new();
    for _ in 0..cfg.phrases {
        let motif = style.motifs.choose(rng).expect("styles have motifs");
        let mut pitch = base + rng.random_range(-3..=3);
        let mut notes = Vec::with_capacity(motif.len() + 1);
        notes.push(pitch);
        for &step in motif.iter() {
            pitch += step as i32;
            notes.push(pitch);
        }
        let half = notes.len() / 2;
        for (n, &p) in notes.iter().enumerate() {
            if n == half {
                slots.push(Slot { duration: 2, pitch: None });
            }
            let duration = style.rhythm[n % style.rhythm.len()];
            let p = p.clamp(24, 108) as u8;
            if duration >= 2 && rng.random_bool(cfg.ornament_rate) {
                let neighbour = if rng.random_bool(0.5) { p + 1 } else { p - 1 };
                slots.push(Slot { duration: duration / 2, pitch: Some(p) });
                slots.push(Slot { duration: duration - duration / 2, pitch: Some(neighbour) });
            } else {
                slots.push(Slot { duration, pitch: Some(p) });
            }
        }
        slots.push(Slot { duration: rng.random_range(6..=8), pitch: None });
    }
    slots
}

const STEPS: [(&str, i8); 12] = [
    ("C", 0), ("C", 1), ("D", 0), ("D", 1), ("E", 0), ("F", 0),
    ("F", 1), ("G", 0), ("G", 1), ("A", 0), ("A", 1), ("B", 0),
];

fn type_name(duration: u32) -> Option<(&'static str, bool)> {
    match duration {
        1 => Some(("16th", false)),
        2 => Some(("eighth", false)),
        3 => Some(("eighth", true)),
        4 => Some(("quarter", false)),
        6 => Some(("quarter", true)),
        8 => Some(("half", false)),
        12 => Some(("half", true)),
        16 => Some(("whole", false)),
        _ => None,
    }
}

/// Length, pitch (`None` for a rest), tie start, tie stop.
type Written = (u32, Option<u8>, bool, bool);

/// Single-part 4/4 score; notes crossing a barline are split and tied.
fn render_musicxml(title: &str, composer: &str, slots: &[Slot]) -> String {
    let mut pieces: Vec<Vec<Written>> = vec![Vec::new()];
    let mut room = MEASURE;
    for slot in slots {
        let mut left = slot.duration;
        let mut first = true;
        while left > 0 {
            let take = left.min(room);
            left -= take;
            let tie_start = slot.pitch.is_some() && left > 0;
            let tie_stop = slot.pitch.is_some() && !first;
            pieces.last_mut().expect("one measure").push((take, slot.pitch, tie_start, tie_stop));
            first = false;
            room -= take;
            if room == 0 {
                pieces.push(Vec::new());
                room = MEASURE;
            }
        }
    }
    if room < MEASURE {
        pieces.last_mut().expect("one measure").push((room, None, false, false));
    } else {
        pieces.pop();
    }

    let mut x = String::new();
    x.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<score-partwise version=\"3.1\">\n");
    let _ = writeln!(x, "  <work><work-title>{title}</work-title></work>");
    let _ = writeln!(x, "  <identification><creator type=\"composer\">{composer}</creator></identification>");
    x.push_str("  <part-list><score-part id=\"P1\"><part-name>Melody</part-name></score-part></part-list>\n");
    x.push_str("  <part id=\"P1\">\n");
    for (m, notes) in pieces.iter().enumerate() {
        let _ = writeln!(x, "    <measure number=\"{}\">", m + 1);
        if m == 0 {
            let _ = writeln!(
                x,
                "      <attributes><divisions>{DIVISIONS}</divisions><time><beats>4</beats><beat-type>4</beat-type></time></attributes>"
            );
        }
        for &(duration, pitch, tie_start, tie_stop) in notes {
            x.push_str("      <note>");
            match pitch {
                Some(p) => {
                    let (step, alter) = STEPS[(p % 12) as usize];
                    let octave = p as i32 / 12 - 1;
                    let _ = write!(x, "<pitch><step>{step}</step>");
                    if alter != 0 {
                        let _ = write!(x, "<alter>{alter}</alter>");
                    }
                    let _ = write!(x, "<octave>{octave}</octave></pitch>");
                }
                None => x.push_str("<rest/>"),
            }
            let _ = write!(x, "<duration>{duration}</duration>");
            if tie_stop {
                x.push_str("<tie type=\"stop\"/>");
            }
            if tie_start {
                x.push_str("<tie type=\"start\"/>");
            }
            if let Some((name, dotted)) = type_name(duration) {
                let _ = write!(x, "<type>{name}</type>");
                if dotted {
                    x.push_str("<dot/>");
                }
            }
            x.push_str("</note>\n");
        }
        x.push_str("    </measure>\n");
    }
    x.push_str("  </part>\n</score-partwise>\n");
    x
}

/// Writes every piece as `<piece_id>.musicxml` plus a `manifest.toml`
/// whose groups are the style names.
pub fn write_corpus(dir: &Path, cfg: &SynthConfig) -> Result<PathBuf, IngestError> {
    let pieces = generate(cfg).map_err(IngestError::Manifest)?;
    std::fs::create_dir_all(dir).map_err(|source| IngestError::Io { path: dir.display().to_string(), source })?;
    let mut manifest = CorpusManifest { pieces: Vec::new() };
    for p in &pieces {
        let file = format!("{}.musicxml", p.piece_id);
        let path = dir.join(&file);
        crate::atomic::write_atomic(&path, p.musicxml.as_bytes())
            .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
        manifest.pieces.push(PieceEntry {
            path: file.into(),
            piece_id: p.piece_id.clone(),
            composer: p.style_name.clone(),
            group: Some(p.style_name.clone()),
            melody: MelodyRule::Highest,
        });
    }
    let path = dir.join("manifest.toml");
    crate::atomic::write_atomic(&path, manifest.to_toml().as_bytes())
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_musicxml;

    #[test]
    fn rendered_scores_parse_back() {
        let cfg = SynthConfig { pieces: 5, styles: 5, ..SynthConfig::default() };
        for p in generate(&cfg).unwrap() {
            let m = parse_musicxml(&p.musicxml).unwrap();
            assert!(m.len() >= cfg.phrases * 8, "{}", p.piece_id);
            assert!(m.is_monophonic());
            assert_eq!(m.composer, p.style_name);
        }
    }

    #[test]
    fn ties_across_barlines_merge() {
        let slots = [
            Slot { duration: 14, pitch: None },
            Slot { duration: 4, pitch: Some(60) },
            Slot { duration: 2, pitch: Some(62) },
        ];
        let m = parse_musicxml(&render_musicxml("t", "c", &slots)).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.events[0].duration, crate::ingest::Beats::from(1));
        assert_eq!(m.events[1].onset_global, crate::ingest::Beats::new(18, 4));
    }

    #[test]
    fn deterministic_and_blocked() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        let styles: Vec<usize> = a.iter().map(|p| p.style).collect();
        assert_eq!(styles, vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4]);
        assert_ne!(a[0].musicxml, a[1].musicxml);
    }

    #[test]
    fn style_bounds() {
        assert!(generate(&SynthConfig { styles: 6, ..SynthConfig::default() }).is_err());
        assert!(generate(&SynthConfig { pieces: 2, styles: 3, ..SynthConfig::default() }).is_err());
    }
}
