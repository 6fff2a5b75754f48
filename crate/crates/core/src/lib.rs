//! Perceptual segment graphs for symbolic melodies.
//!
//! The crate turns MusicXML melodies into note matrices, labels every note
//! with an Implication-Realization symbol and a two-factor expectancy,
//! groups notes into Gestalt segments, and compares segments with
//! multivariate DTW. Each piece becomes a labeled k-NN graph; graphs are
//! compared with the Weisfeiler-Lehman subtree kernel, bisected with
//! Kernighan-Lin, embedded with graph2vec, and clustered.

pub mod analysis;
pub mod annotate;
pub mod atomic;
pub mod dtw;
pub mod embed;
pub mod graph;
pub mod hashing;
pub mod ingest;
pub mod pipeline;
pub mod segment;
pub mod synth;
