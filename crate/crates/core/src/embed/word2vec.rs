use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::SharedMatrix;
use super::sgns::{sgns_step_with, Scratch};
use super::vocab::{build_vocab, Vocab};
use super::{DatasetKind, EmbedError, EmbeddingSet, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct W2VConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub min_lr: f64,
    pub min_count: u64,
    pub subsample: f64,
    pub seed: u64,
    /// Training threads. Only `1` is bit-reproducible.
    pub workers: usize,
}

impl Default for W2VConfig {
    fn default() -> Self {
        W2VConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 20,
            initial_lr: 0.025,
            min_lr: 1e-4,
            min_count: 5,
            subsample: 1e-4,
            seed: 1,
            workers: 1,
        }
    }
}

impl W2VConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::Config(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if !(self.initial_lr > 0.0 && self.min_lr >= 0.0 && self.min_lr <= self.initial_lr) {
            return bad("learning rates must satisfy 0 <= min_lr <= initial_lr, initial_lr > 0");
        }
        Ok(())
    }

    /// Linear decay from `initial_lr` to `min_lr` as `progress` goes 0 to 1.
    pub fn lr_at(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.initial_lr - (self.initial_lr - self.min_lr) * p
    }

    pub fn fingerprint(&self) -> String {
        super::fingerprint_json(self)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss per update, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    pub vocab_size: usize,
    pub corpus_tokens: u64,
    /// Documents with no in-vocabulary tokens (paragraph vectors only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub empty_docs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct W2VModel {
    pub vocab: Vocab,
    pub input: SharedMatrix,
    pub output: SharedMatrix,
    pub config: W2VConfig,
    pub report: TrainReport,
}

impl W2VModel {
    pub fn vector(&self, token: &str) -> Option<Vec<f64>> {
        self.vocab.id(token).map(|id| self.input.row(id as usize))
    }

    /// Input vectors as an embedding set keyed by token, L2-normalized.
    /// Zero vectors (never-updated tokens) are skipped.
    pub fn to_embedding_set(&self, kind: DatasetKind) -> EmbeddingSet {
        let mut set = EmbeddingSet::new(self.config.dim, kind, Provenance::TrainedW2V);
        for (i, tok) in self.vocab.tokens().iter().enumerate() {
            let v: Vec<f32> = self.input.row(i).iter().map(|&x| x as f32).collect();
            if v.iter().any(|&x| x != 0.0) {
                set.push(tok.clone(), v).expect("distinct tokens, fixed dim");
            }
        }
        set.normalize().expect("zero rows skipped");
        set
    }
}

/// Seed for one (epoch, worker) stream, derived from the master seed.
pub(crate) fn stream_seed(seed: u64, epoch: usize, worker: usize) -> u64 {
    let mut z = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (worker as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn subsample<R: Rng>(vocab: &Vocab, ids: &[u32], rng: &mut R, out: &mut Vec<u32>) {
    out.clear();
    for &w in ids {
        let p = vocab.keep_prob(w);
        if p >= 1.0 || rng.random::<f64>() < p {
            out.push(w);
        }
    }
}

/// Draws `k` negatives, redrawing (a bounded number of times) any that equal
/// `target`; a draw that keeps colliding is dropped.
pub(crate) fn draw_negatives<R: Rng>(vocab: &Vocab, k: usize, target: u32, rng: &mut R, out: &mut Vec<u32>) {
    out.clear();
    for _ in 0..k {
        for _ in 0..10 {
            let n = vocab.sample_negative(rng);
            if n != target {
                out.push(n);
                break;
            }
        }
    }
}

/// Runs `epochs` passes over `units`, sharding unit `i` to worker
/// `i % workers`. `step` processes one unit and returns (loss sum, updates).
/// Returns the mean loss per update for each epoch.
pub(crate) fn run_epochs<F>(cfg: &W2VConfig, units: usize, unit_len: &(dyn Fn(usize) -> u64 + Sync), step: F) -> Vec<f64>
where
    F: Fn(usize, f64, &mut ChaCha8Rng, &mut Scratch) -> (f64, u64) + Sync,
{
    let total: u64 = (0..units).map(unit_len).sum::<u64>().max(1) * cfg.epochs as u64;
    let processed = AtomicU64::new(0);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let acc = Mutex::new((0.0f64, 0u64));
        let work = |worker: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, epoch, worker));
            let mut scratch = Scratch::new(cfg.dim);
            let (mut loss, mut n) = (0.0, 0u64);
            for u in (worker..units).step_by(cfg.workers) {
                let lr = cfg.lr_at(processed.load(Ordering::Relaxed) as f64 / total as f64);
                let (l, c) = step(u, lr, &mut rng, &mut scratch);
                loss += l;
                n += c;
                processed.fetch_add(unit_len(u), Ordering::Relaxed);
            }
            let mut a = acc.lock().expect("no panics while held");
            a.0 += loss;
            a.1 += n;
        };
        if cfg.workers == 1 {
            work(0);
        } else {
            std::thread::scope(|s| {
                for w in 0..cfg.workers {
                    let work = &work;
                    s.spawn(move || work(w));
                }
            });
        }
        let (loss, n) = acc.into_inner().expect("threads joined");
        losses.push(if n == 0 { 0.0 } else { loss / n as f64 });
    }
    losses
}

/// Skip-gram with negative sampling over token streams (one stream per
/// sentence or document). Windows do not cross stream boundaries.
pub fn train_word2vec<S: AsRef<str> + Sync>(corpus: &[Vec<S>], cfg: &W2VConfig) -> Result<W2VModel, EmbedError> {
    cfg.validate()?;
    let vocab = build_vocab(corpus, cfg.min_count, cfg.subsample)?;
    let streams: Vec<Vec<u32>> = corpus.iter().map(|s| vocab.encode(s)).collect();
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let input = SharedMatrix::uniform(vocab.len(), cfg.dim, &mut init_rng);
    let output = SharedMatrix::zeros(vocab.len(), cfg.dim);

    let step = |u: usize, lr: f64, rng: &mut ChaCha8Rng, s: &mut Scratch| {
        let mut kept = std::mem::take(&mut s.ctx);
        let mut negs = std::mem::take(&mut s.neg);
        subsample(&vocab, &streams[u], rng, &mut kept);
        let (mut loss, mut n) = (0.0, 0u64);
        for pos in 0..kept.len() {
            let b = rng.random_range(1..=cfg.window);
            let lo = pos.saturating_sub(b);
            let hi = (pos + b).min(kept.len() - 1);
            for c in lo..=hi {
                if c == pos {
                    continue;
                }
                draw_negatives(&vocab, cfg.negatives, kept[c], rng, &mut negs);
                loss += sgns_step_with(&input, &output, kept[pos], kept[c], &negs, lr, s);
                n += 1;
            }
        }
        s.ctx = kept;
        s.neg = negs;
        (loss, n)
    };
    let len = |u: usize| streams[u].len() as u64;
    let epoch_losses = run_epochs(cfg, streams.len(), &len, step);
    let report = TrainReport {
        epoch_losses,
        vocab_size: vocab.len(),
        corpus_tokens: streams.iter().map(|s| s.len() as u64).sum(),
        empty_docs: Vec::new(),
    };
    Ok(W2VModel { vocab, input, output, config: cfg.clone(), report })
}
