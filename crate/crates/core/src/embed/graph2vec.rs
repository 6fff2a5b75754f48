//! graph2vec: PV-DBOW over Weisfeiler-Lehman subtree tokens.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbedError;
use crate::analysis::wl::wl_label_rounds;
use crate::analysis::AnalysisError;
use crate::graph::SegmentGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Graph2VecConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    pub seed: u64,
}

impl Default for Graph2VecConfig {
    fn default() -> Self {
        Graph2VecConfig { dim: 128, epochs: 50, learning_rate: 0.025, negatives: 5, seed: 42 }
    }
}

/// Every WL label of every node over rounds `0..=h`.
pub fn wl_document(g: &SegmentGraph, h: usize) -> Result<Vec<String>, AnalysisError> {
    Ok(wl_label_rounds(g, h)?.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph2VecModel {
    pub vectors: Vec<Vec<f64>>,
    /// Mean loss per token for each epoch.
    pub epoch_loss: Vec<f64>,
    pub vocabulary_size: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cumulative unigram^0.75 weights for negative sampling.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NoiseTable { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("nonempty vocabulary");
        let x = rng.random_range(0.0..total);
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

/// Trains one vector per document to predict that document's tokens
/// against sampled noise tokens. Deterministic for a fixed seed.
pub fn graph2vec_train(documents: &[Vec<String>], cfg: &Graph2VecConfig) -> Result<Graph2VecModel, EmbedError> {
    if documents.len() < 2 {
        return Err(EmbedError::TooFewItems { needed: 2, got: documents.len() });
    }
    if cfg.dim == 0 {
        return Err(EmbedError::InvalidConfig("dim must be positive".into()));
    }
    let mut vocab: BTreeMap<&str, u64> = BTreeMap::new();
    for token in documents.iter().flatten() {
        *vocab.entry(token.as_str()).or_insert(0) += 1;
    }
    if vocab.is_empty() {
        return Err(EmbedError::EmptyVocabulary);
    }
    let index: BTreeMap<&str, usize> = vocab.keys().enumerate().map(|(i, &t)| (t, i)).collect();
    let counts: Vec<u64> = vocab.values().copied().collect();
    let noise = NoiseTable::new(&counts);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.dim;
    let mut doc_vecs: Vec<Vec<f64>> = (0..documents.len())
        .map(|_| (0..dim).map(|_| (rng.random::<f64>() - 0.5) / dim as f64).collect())
        .collect();
    let mut out_vecs = vec![vec![0.0; dim]; counts.len()];

    let mut pairs: Vec<(usize, usize)> = documents
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| doc.iter().map(move |t| (d, t)))
        .map(|(d, t)| (d, index[t.as_str()]))
        .collect();
    let total_steps = (pairs.len() * cfg.epochs).max(1) as f64;
    let lr_min = cfg.learning_rate / 100.0;
    let mut step = 0usize;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![0.0; dim];

    for _ in 0..cfg.epochs {
        pairs.shuffle(&mut rng);
        let mut loss = 0.0;
        for &(d, target) in &pairs {
            let lr = cfg.learning_rate - (cfg.learning_rate - lr_min) * (step as f64 / total_steps);
            step += 1;
            grad.iter_mut().for_each(|g| *g = 0.0);
            for s in 0..=cfg.negatives {
                let (word, label) = if s == 0 {
                    (target, 1.0)
                } else {
                    let w = noise.sample(&mut rng);
                    if w == target {
                        continue;
                    }
                    (w, 0.0)
                };
                let out = &mut out_vecs[word];
                let dv = &doc_vecs[d];
                let score: f64 = dv.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
                let p = sigmoid(score);
                loss -= if label == 1.0 { p.max(1e-12).ln() } else { (1.0 - p).max(1e-12).ln() };
                let g = (label - p) * lr;
                for i in 0..dim {
                    grad[i] += g * out[i];
                    out[i] += g * dv[i];
                }
            }
            for (v, g) in doc_vecs[d].iter_mut().zip(&grad) {
                *v += g;
            }
        }
        epoch_loss.push(loss / pairs.len().max(1) as f64);
    }
    Ok(Graph2VecModel { vectors: doc_vecs, epoch_loss, vocabulary_size: counts.len() })
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
}
