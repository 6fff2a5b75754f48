//! I-R symbols and two-factor expectancy.

mod expectancy;
mod ir;

pub use self::expectancy::{
    beta_from_sr2, bin_expectancy, bin_optional, dominant_symbol, matrix_expectancies,
    note_expectancy, pitch_proximity_norm, pitch_reversal_raw, segment_expectancy, CorpusStats,
    ExpectancyBin, ExpectancyScore, BETA_PP, BETA_PR, PROXIMITY_CAP, REGISTRAL_RETURN_MAX,
    SR2_PITCH_PROXIMITY, SR2_PITCH_REVERSAL,
};
pub use self::ir::{annotate, classify_triplet, IrSymbol, SIMILAR_SIZE_MAX, SMALL_INTERVAL_MAX};
