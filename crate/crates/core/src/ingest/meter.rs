//! Metric weight of a position inside a measure.

use num_rational::Rational64;
use num_traits::{Signed, Zero};

use super::IngestError;

/// Lowest weight the metric hierarchy assigns.
pub const BEAT_STRENGTH_FLOOR: f64 = 1.0 / 16.0;

/// Time signature as written: `num/den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TimeSignature {
    pub numerator: u32,
    pub denominator: u32,
}

impl TimeSignature {
    pub const fn new(numerator: u32, denominator: u32) -> Self {
        Self { numerator, denominator }
    }

    /// Length of one full measure in quarter-note beats.
    pub fn measure_length(&self) -> Rational64 {
        Rational64::new(4 * self.numerator as i64, self.denominator as i64)
    }

    /// Successive grouping factors from the whole measure down to the
    /// notated beat unit: twos first, then threes, then any larger prime.
    /// 4/4 → [2, 2], 3/4 → [3], 6/8 → [2, 3], 12/8 → [2, 2, 3].
    fn grouping(&self) -> Vec<i64> {
        let mut n = self.numerator as i64;
        let mut factors = Vec::new();
        for p in [2i64, 3] {
            while n % p == 0 && n > 1 {
                factors.push(p);
                n /= p;
            }
        }
        if n > 1 {
            factors.push(n);
        }
        factors
    }
}

impl Default for TimeSignature {
    fn default() -> Self {
        Self::new(4, 4)
    }
}

/// Weight of `onset_in_measure` under `time_signature`.
///
/// The measure start weighs 1. Each level of the metric hierarchy halves
/// the weight: first the numerator's grouping levels (binary before
/// ternary), then binary subdivisions of the beat unit. Positions that sit
/// on no level above the floor get [`BEAT_STRENGTH_FLOOR`].
pub fn beat_strength(
    onset_in_measure: Rational64,
    time_signature: TimeSignature,
) -> Result<f64, IngestError> {
    let length = time_signature.measure_length();
    if onset_in_measure.is_negative() || onset_in_measure >= length {
        return Err(IngestError::OnsetOutOfRange {
            onset: onset_in_measure.to_string(),
            measure_length: length.to_string(),
        });
    }
    if onset_in_measure.is_zero() {
        return Ok(1.0);
    }

    let mut spacing = length;
    let mut weight = 1.0;
    let mut factors = time_signature.grouping().into_iter();
    while weight > BEAT_STRENGTH_FLOOR {
        let factor = factors.next().unwrap_or(2);
        spacing /= factor;
        weight /= 2.0;
        if is_multiple(onset_in_measure, spacing) {
            return Ok(weight);
        }
    }
    Ok(BEAT_STRENGTH_FLOOR)
}

fn is_multiple(value: Rational64, step: Rational64) -> bool {
    *(value / step).denom() == 1
}
