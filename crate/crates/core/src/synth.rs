//! Seeded synthetic corpora with a controlled party signal, for checking
//! that the embedding and classification stages recover what was planted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classify::{DEMOCRATIC, REPUBLICAN};

#[derive(Debug, Clone)]
pub struct SignalCorpusConfig {
    pub per_party: usize,
    pub doc_len: usize,
    pub neutral_vocab: usize,
    /// Signal tokens; the first half lean Democratic, the rest Republican.
    pub signal_tokens: usize,
    /// Per-position probability of drawing a signal token leaning toward
    /// the document's party, and toward the other party.
    pub p_own: f64,
    pub p_other: f64,
    pub seed: u64,
}

impl Default for SignalCorpusConfig {
    fn default() -> Self {
        SignalCorpusConfig { per_party: 150, doc_len: 60, neutral_vocab: 300, signal_tokens: 10, p_own: 0.12, p_other: 0.02, seed: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDoc {
    pub id: String,
    pub label: i8,
    pub tokens: Vec<String>,
}

pub fn signal_token(i: usize) -> String {
    format!("sig{i}")
}

/// Neutral tokens follow a Zipf-like law; signal tokens are injected with
/// party-conditional probability.
pub fn party_signal_corpus(cfg: &SignalCorpusConfig) -> Vec<SyntheticDoc> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights: Vec<f64> = (1..=cfg.neutral_vocab).map(|r| 1.0 / r as f64).collect();
    let cum: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let total = *cum.last().unwrap_or(&1.0);
    let half = cfg.signal_tokens / 2;
    let mut docs = Vec::with_capacity(2 * cfg.per_party);
    for i in 0..2 * cfg.per_party {
        let label = if i % 2 == 0 { DEMOCRATIC } else { REPUBLICAN };
        let (own, other) = if label == DEMOCRATIC { (0..half, half..cfg.signal_tokens) } else { (half..cfg.signal_tokens, 0..half) };
        let tokens = (0..cfg.doc_len)
            .map(|_| {
                let u: f64 = rng.random();
                if u < cfg.p_own && !own.is_empty() {
                    signal_token(rng.random_range(own.clone()))
                } else if u < cfg.p_own + cfg.p_other && !other.is_empty() {
                    signal_token(rng.random_range(other.clone()))
                } else {
                    let x = rng.random::<f64>() * total;
                    format!("w{:03}", cum.partition_point(|&c| c < x).min(cfg.neutral_vocab - 1))
                }
            })
            .collect();
        docs.push(SyntheticDoc { id: format!("doc{i:04}"), label, tokens });
    }
    docs
}
