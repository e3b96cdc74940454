use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EmbedError;

pub const UNIGRAM_POWER: f64 = 0.75;

/// Token inventory with counts, subsampling keep-probabilities and the
/// negative-sampling distribution. Ids are assigned by descending count, ties
/// broken by token.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    counts: Vec<u64>,
    total_tokens: u64,
    min_count: u64,
    subsample_threshold: f64,
    unigram: Vec<f64>,
    cumulative: Vec<f64>,
    keep: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    counts: Vec<u64>,
    min_count: u64,
    subsample_threshold: f64,
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr { tokens: v.tokens, counts: v.counts, min_count: v.min_count, subsample_threshold: v.subsample_threshold }
    }
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        Vocab::from_counts(r.tokens.into_iter().zip(r.counts).collect(), r.min_count, r.subsample_threshold)
    }
}

/// Keep-probability for a token of corpus frequency `f` under threshold `t`.
pub fn keep_probability(f: f64, t: f64) -> f64 {
    // A zero threshold turns subsampling off.
    if f <= 0.0 || t <= 0.0 {
        return 1.0;
    }
    ((t / f).sqrt() + t / f).min(1.0)
}

impl Vocab {
    /// Builds from (token, count) pairs already filtered by `min_count`.
    fn from_counts(mut pairs: Vec<(String, u64)>, min_count: u64, t: f64) -> Self {
        pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let total_tokens: u64 = pairs.iter().map(|p| p.1).sum();
        let weights: Vec<f64> = pairs.iter().map(|p| (p.1 as f64).powf(UNIGRAM_POWER)).collect();
        let z: f64 = weights.iter().sum();
        let unigram: Vec<f64> = weights.iter().map(|w| w / z).collect();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = unigram
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        let keep = pairs.iter().map(|p| keep_probability(p.1 as f64 / total_tokens as f64, t)).collect();
        let index = pairs.iter().enumerate().map(|(i, p)| (p.0.clone(), i as u32)).collect();
        let (tokens, counts) = pairs.into_iter().unzip();
        Vocab { tokens, index, counts, total_tokens, min_count, subsample_threshold: t, unigram, cumulative, keep }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    /// Sum of counts of retained tokens.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn subsample_threshold(&self) -> f64 {
        self.subsample_threshold
    }

    pub fn unigram(&self) -> &[f64] {
        &self.unigram
    }

    pub fn keep_prob(&self, id: u32) -> f64 {
        self.keep[id as usize]
    }

    pub fn sample_negative<R: Rng>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.tokens.len() - 1) as u32
    }

    /// Maps tokens to ids, dropping out-of-vocabulary tokens.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.id(t.as_ref())).collect()
    }
}

/// Counts tokens across streams in parallel and keeps those seen at least
/// `min_count` times.
pub fn build_vocab<S: AsRef<str> + Sync>(corpus: &[Vec<S>], min_count: u64, t: f64) -> Result<Vocab, EmbedError> {
    let counts: HashMap<String, u64> = corpus
        .par_iter()
        .fold(HashMap::new, |mut m: HashMap<String, u64>, stream| {
            for tok in stream {
                *m.entry(tok.as_ref().to_string()).or_default() += 1;
            }
            m
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    let pairs: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
    if pairs.is_empty() {
        return Err(EmbedError::EmptyVocab);
    }
    Ok(Vocab::from_counts(pairs, min_count, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus(s: &str) -> Vec<Vec<String>> {
        vec![s.split_whitespace().map(String::from).collect()]
    }

    #[test]
    fn counts_and_min_count() {
        let v = build_vocab(&corpus("a a b"), 1, 1e-4).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.count(v.id("a").unwrap()), 2);
        assert_eq!(v.count(v.id("b").unwrap()), 1);
        let v2 = build_vocab(&corpus("a a b"), 2, 1e-4).unwrap();
        assert_eq!(v2.tokens(), ["a"]);
        assert!(matches!(build_vocab(&corpus(""), 1, 1e-4), Err(EmbedError::EmptyVocab)));
        assert!(matches!(build_vocab(&corpus("a"), 2, 1e-4), Err(EmbedError::EmptyVocab)));
    }

    #[test]
    fn unigram_three_quarter_power() {
        let v = build_vocab(&corpus("a a b"), 1, 1e-4).unwrap();
        let pa = 2f64.powf(0.75) / (2f64.powf(0.75) + 1.0);
        assert!((v.unigram()[v.id("a").unwrap() as usize] - pa).abs() < 1e-12);
        assert!((pa - 0.627).abs() < 1e-3);
        assert!((v.unigram().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sampling_follows_distribution() {
        let v = build_vocab(&corpus("a a a a a a a a b c"), 1, 1e-4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut hits = vec![0usize; v.len()];
        for _ in 0..n {
            hits[v.sample_negative(&mut rng) as usize] += 1;
        }
        for (i, h) in hits.iter().enumerate() {
            assert!((*h as f64 / n as f64 - v.unigram()[i]).abs() < 0.01);
        }
    }

    #[test]
    fn keep_probability_formula() {
        assert_eq!(keep_probability(1e-6, 1e-4), 1.0);
        assert_eq!(keep_probability(0.5, 0.0), 1.0);
        let f: f64 = 0.01;
        assert!((keep_probability(f, 1e-4) - ((1e-4 / f).sqrt() + 1e-4 / f)).abs() < 1e-15);
    }

    #[test]
    fn ids_are_dense_and_ordered() {
        let v = build_vocab(&corpus("c b b a a a d d"), 1, 1e-3).unwrap();
        assert_eq!(v.tokens(), ["a", "b", "d", "c"]);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), Some(i as u32));
        }
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back.tokens(), v.tokens());
        assert_eq!(back.unigram(), v.unigram());
    }
}
