//! Implication-Realization symbols for note triplets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::NoteMatrix;

/// Largest implicative interval (semitones) that counts as small.
pub const SMALL_INTERVAL_MAX: i32 = 5;
/// Size difference (semitones) within which two intervals are "similar".
pub const SIMILAR_SIZE_MAX: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IrSymbol {
    P,
    D,
    ID,
    IP,
    VP,
    R,
    IR,
    VR,
    /// No complete triplet around the note.
    X,
}

impl IrSymbol {
    /// Every symbol, in tie-break precedence order (X last).
    pub const ALL: [IrSymbol; 9] = [
        IrSymbol::P,
        IrSymbol::D,
        IrSymbol::ID,
        IrSymbol::IP,
        IrSymbol::VP,
        IrSymbol::R,
        IrSymbol::IR,
        IrSymbol::VR,
        IrSymbol::X,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            IrSymbol::P => "P",
            IrSymbol::D => "D",
            IrSymbol::ID => "ID",
            IrSymbol::IP => "IP",
            IrSymbol::VP => "VP",
            IrSymbol::R => "R",
            IrSymbol::IR => "IR",
            IrSymbol::VR => "VR",
            IrSymbol::X => "X",
        }
    }

    pub(crate) fn precedence(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for IrSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IrSymbol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IrSymbol::ALL
            .iter()
            .find(|sym| sym.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown I-R symbol `{s}`"))
    }
}

/// Classifies the triplet `(p1, p2, p3)`; the symbol belongs to `p2`.
///
/// With implicative interval `I = p2 - p1` and realized interval
/// `R = p3 - p2`:
///
/// | implicative | direction | size of R            | symbol |
/// |-------------|-----------|----------------------|--------|
/// | unison      | –         | unison               | D      |
/// | unison      | –         | within 2             | P      |
/// | unison      | –         | 3 or more            | VP     |
/// | small (≤5)  | same      | similar (±2)         | P      |
/// | small       | same      | ≥ I+3                | VP     |
/// | small       | same      | ≤ I−3                | IR     |
/// | small       | change    | equal                | ID     |
/// | small       | change    | similar              | IP     |
/// | small       | change    | ≥ I+3                | VR     |
/// | small       | change    | ≤ I−3                | R      |
/// | large (≥6)  | change    | ≤ I−3                | R      |
/// | large       | change    | > I−3                | VR     |
/// | large       | same      | ≤ I−3                | IR     |
/// | large       | same      | similar              | P      |
/// | large       | same      | ≥ I+3                | VP     |
///
/// A realized unison after a non-unison interval counts as a change of
/// direction.
pub fn classify_triplet(p1: u8, p2: u8, p3: u8) -> IrSymbol {
    let implicative = p2 as i32 - p1 as i32;
    let realized = p3 as i32 - p2 as i32;
    let (imp, real) = (implicative.abs(), realized.abs());

    if imp == 0 {
        return match real {
            0 => IrSymbol::D,
            r if r <= SIMILAR_SIZE_MAX => IrSymbol::P,
            _ => IrSymbol::VP,
        };
    }

    let same_direction = realized != 0 && realized.signum() == implicative.signum();
    let growth = real - imp;
    let similar = growth.abs() <= SIMILAR_SIZE_MAX;

    if imp <= SMALL_INTERVAL_MAX {
        match (same_direction, growth) {
            (true, _) if similar => IrSymbol::P,
            (true, g) if g > 0 => IrSymbol::VP,
            (true, _) => IrSymbol::IR,
            (false, 0) => IrSymbol::ID,
            (false, _) if similar => IrSymbol::IP,
            (false, g) if g > 0 => IrSymbol::VR,
            (false, _) => IrSymbol::R,
        }
    } else {
        match (same_direction, growth) {
            (false, g) if g <= -(SIMILAR_SIZE_MAX + 1) => IrSymbol::R,
            (false, _) => IrSymbol::VR,
            (true, g) if g <= -(SIMILAR_SIZE_MAX + 1) => IrSymbol::IR,
            (true, _) if similar => IrSymbol::P,
            (true, _) => IrSymbol::VP,
        }
    }
}

/// Fills the `ir_symbol` column. Boundary notes get [`IrSymbol::X`].
pub fn annotate(matrix: &NoteMatrix) -> NoteMatrix {
    let mut out = matrix.clone();
    let pitches = matrix.pitches();
    let n = pitches.len();
    for (i, event) in out.events.iter_mut().enumerate() {
        event.ir_symbol = Some(if i == 0 || i + 1 >= n {
            IrSymbol::X
        } else {
            classify_triplet(pitches[i - 1], pitches[i], pitches[i + 1])
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Beats, NoteEvent};
    use proptest::prelude::*;

    fn matrix_of(pitches: &[u8]) -> NoteMatrix {
        let mut m = NoteMatrix::new("t", "c");
        m.events = pitches
            .iter()
            .enumerate()
            .map(|(i, &p)| NoteEvent::new(Beats::from(i as i64), Beats::from(0), Beats::from(1), p, 1.0))
            .collect();
        m
    }

    fn symbols(m: &NoteMatrix) -> Vec<IrSymbol> {
        m.events.iter().map(|e| e.ir_symbol.unwrap()).collect()
    }

    #[test]
    fn documented_examples() {
        assert_eq!(classify_triplet(60, 62, 64), IrSymbol::P);
        assert_eq!(classify_triplet(60, 60, 60), IrSymbol::D);
        assert_eq!(classify_triplet(60, 72, 67), IrSymbol::R);
        assert_eq!(classify_triplet(60, 62, 60), IrSymbol::ID);
        assert_eq!(classify_triplet(60, 63, 62), IrSymbol::IP);
        assert_eq!(classify_triplet(60, 62, 67), IrSymbol::VP);
        assert_eq!(classify_triplet(60, 69, 71), IrSymbol::IR);
        assert_eq!(classify_triplet(60, 68, 60), IrSymbol::VR);
    }

    #[test]
    fn chopin_context_rows() {
        // rows 3..6 of the reference note matrix, each with its neighbours
        assert_eq!(classify_triplet(66, 66, 65), IrSymbol::P);
        assert_eq!(classify_triplet(66, 65, 63), IrSymbol::P);
        assert_eq!(classify_triplet(65, 63, 70), IrSymbol::VR);
        assert_eq!(classify_triplet(63, 70, 68), IrSymbol::R);
    }

    #[test]
    fn annotate_boundaries() {
        assert_eq!(symbols(&annotate(&matrix_of(&[60]))), vec![IrSymbol::X]);
        assert_eq!(
            symbols(&annotate(&matrix_of(&[60, 62]))),
            vec![IrSymbol::X, IrSymbol::X]
        );
        assert_eq!(
            symbols(&annotate(&matrix_of(&[60, 62, 64]))),
            vec![IrSymbol::X, IrSymbol::P, IrSymbol::X]
        );
    }

    #[test]
    fn inversion_invariance_exhaustive() {
        for i in -15i32..=15 {
            for r in -15i32..=15 {
                let (p1, p2, p3) = (60, 60 + i, 60 + i + r);
                let (q1, q2, q3) = (60, 60 - i, 60 - i - r);
                let a = classify_triplet(p1 as u8, p2 as u8, p3 as u8);
                let b = classify_triplet(q1 as u8, q2 as u8, q3 as u8);
                assert_eq!(a, b, "I={i} R={r}");
            }
        }
    }

    #[test]
    fn every_symbol_reachable() {
        let mut seen = std::collections::HashSet::new();
        for i in -12i32..=12 {
            for r in -12i32..=12 {
                seen.insert(classify_triplet(60, (60 + i) as u8, (60 + i + r) as u8));
            }
        }
        assert_eq!(seen.len(), 8);
        assert!(!seen.contains(&IrSymbol::X));
    }

    proptest! {
        #[test]
        fn transposition_invariance(p1 in 20u8..100, p2 in 20u8..100, p3 in 20u8..100, t in -20i32..20) {
            let shift = |p: u8| (p as i32 + t) as u8;
            prop_assert_eq!(classify_triplet(p1, p2, p3), classify_triplet(shift(p1), shift(p2), shift(p3)));
        }

        #[test]
        fn exactly_boundary_notes_are_x(pitches in proptest::collection::vec(40u8..90, 1..30)) {
            let annotated = annotate(&matrix_of(&pitches));
            let xs = annotated.events.iter().filter(|e| e.ir_symbol == Some(IrSymbol::X)).count();
            prop_assert_eq!(xs, pitches.len().min(2));
        }
    }

    #[test]
    fn symbol_text_round_trip() {
        for s in IrSymbol::ALL {
            assert_eq!(s.as_str().parse::<IrSymbol>().unwrap(), s);
        }
        assert!("DP".parse::<IrSymbol>().is_err());
    }
}
