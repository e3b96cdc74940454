use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::SharedMatrix;
use super::sgns::{ns_objective, pvdm_hidden, pvdm_step_with, Scratch};
use super::vocab::{build_vocab, Vocab};
use super::word2vec::{draw_negatives, run_epochs, stream_seed, subsample, TrainReport, W2VConfig};
use super::{DatasetKind, EmbedError, EmbeddingSet, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum D2VMode {
    /// Document vector averaged with the window's word vectors predicts the
    /// center word.
    #[default]
    #[serde(rename = "pv-dm-mean")]
    PvDmMean,
    /// Document vector alone predicts each word.
    #[serde(rename = "pv-dbow")]
    PvDbow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D2VConfig {
    #[serde(flatten)]
    pub base: W2VConfig,
    #[serde(default)]
    pub mode: D2VMode,
    #[serde(default = "default_infer_epochs")]
    pub infer_epochs: usize,
}

fn default_infer_epochs() -> usize {
    50
}

impl Default for D2VConfig {
    fn default() -> Self {
        D2VConfig { base: W2VConfig::default(), mode: D2VMode::default(), infer_epochs: default_infer_epochs() }
    }
}

impl D2VConfig {
    pub fn fingerprint(&self) -> String {
        super::fingerprint_json(self)
    }
}

#[derive(Debug, Clone)]
pub struct D2VModel {
    pub config: D2VConfig,
    pub dataset_kind: DatasetKind,
    pub vocab: Vocab,
    pub word_in: SharedMatrix,
    pub word_out: SharedMatrix,
    pub docs: SharedMatrix,
    doc_ids: Vec<String>,
    doc_index: HashMap<String, usize>,
    pub report: TrainReport,
}

/// Result of embedding an unseen document.
#[derive(Debug, Clone)]
pub struct Inferred {
    pub vector: Vec<f64>,
    /// Tokens found in the model's vocabulary. Zero means the vector is the
    /// untrained initialization.
    pub known_tokens: usize,
}

fn init_doc_rng(seed: u64, salt: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, usize::MAX - salt, 0))
}

impl D2VModel {
    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vector(&self, id: &str) -> Option<Vec<f64>> {
        self.doc_index.get(id).map(|&i| self.docs.row(i))
    }

    /// Document vectors keyed by id, L2-normalized.
    pub fn to_embedding_set(&self) -> EmbeddingSet {
        let mut set = EmbeddingSet::new(self.config.base.dim, self.dataset_kind, Provenance::TrainedD2V);
        for (i, id) in self.doc_ids.iter().enumerate() {
            set.push(id.clone(), self.docs.row(i).iter().map(|&x| x as f32).collect()).expect("distinct ids");
        }
        set.normalize().expect("random init is never zero");
        set
    }

    /// Fits a fresh document vector for `tokens` with word parameters frozen.
    /// Deterministic for a given model and token list.
    pub fn infer_doc_vector<S: AsRef<str>>(&self, tokens: &[S]) -> Inferred {
        let cfg = &self.config.base;
        let ids = self.vocab.encode(tokens);
        let mut rng = init_doc_rng(cfg.seed, 1);
        let scale = 1.0 / cfg.dim as f64;
        let mut doc: Vec<f64> = (0..cfg.dim).map(|_| (rng.random::<f64>() - 0.5) * scale).collect();
        if ids.is_empty() {
            return Inferred { vector: doc, known_tokens: 0 };
        }
        let mut s = Scratch::new(cfg.dim);
        let mut kept = Vec::new();
        let mut negs = Vec::new();
        let mut ctx = Vec::new();
        let mut tmp = Vec::new();
        let total = (self.config.infer_epochs * ids.len()).max(1) as f64;
        let mut done = 0usize;
        for _ in 0..self.config.infer_epochs {
            subsample(&self.vocab, &ids, &mut rng, &mut kept);
            for pos in 0..kept.len() {
                let lr = cfg.lr_at(done as f64 / total);
                s.grad.iter_mut().for_each(|g| *g = 0.0);
                let m = match self.config.mode {
                    D2VMode::PvDbow => {
                        s.h.copy_from_slice(&doc);
                        1
                    }
                    D2VMode::PvDmMean => {
                        window(&kept, pos, rng.random_range(1..=cfg.window), &mut ctx);
                        pvdm_hidden(&doc, &ctx, &self.word_in, &mut s.h, &mut tmp)
                    }
                };
                draw_negatives(&self.vocab, cfg.negatives, kept[pos], &mut rng, &mut negs);
                ns_objective(&s.h, kept[pos], &negs, &self.word_out, None, &mut s.grad, &mut s.rows);
                for (d, g) in doc.iter_mut().zip(&s.grad) {
                    *d -= lr * g / m as f64;
                }
            }
            done += ids.len();
        }
        Inferred { vector: doc, known_tokens: ids.len() }
    }
}

/// Context positions around `pos` within radius `b`, excluding `pos`.
fn window(kept: &[u32], pos: usize, b: usize, out: &mut Vec<u32>) {
    out.clear();
    let lo = pos.saturating_sub(b);
    let hi = (pos + b).min(kept.len() - 1);
    out.extend((lo..=hi).filter(|&c| c != pos).map(|c| kept[c]));
}

/// Trains paragraph vectors jointly with word parameters. Every document gets
/// exactly one vector; documents with no in-vocabulary tokens keep their
/// initialization and are listed in the report.
pub fn train_doc2vec<S: AsRef<str> + Sync>(
    docs: &[(String, Vec<S>)],
    cfg: &D2VConfig,
    kind: DatasetKind,
) -> Result<D2VModel, EmbedError> {
    cfg.base.validate()?;
    if docs.is_empty() {
        return Err(EmbedError::NoDocuments);
    }
    let mut doc_index = HashMap::new();
    for (i, (id, _)) in docs.iter().enumerate() {
        if doc_index.insert(id.clone(), i).is_some() {
            return Err(EmbedError::DuplicateId(id.clone()));
        }
    }
    let streams_raw: Vec<&Vec<S>> = docs.iter().map(|d| &d.1).collect();
    let vocab = {
        let refs: Vec<Vec<&str>> = streams_raw.iter().map(|s| s.iter().map(AsRef::as_ref).collect()).collect();
        build_vocab(&refs, cfg.base.min_count, cfg.base.subsample)?
    };
    let streams: Vec<Vec<u32>> = streams_raw.iter().map(|s| vocab.encode(s)).collect();
    let dim = cfg.base.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.base.seed);
    let word_in = SharedMatrix::uniform(vocab.len(), dim, &mut rng);
    let word_out = SharedMatrix::zeros(vocab.len(), dim);
    let doc_mat = SharedMatrix::uniform(docs.len(), dim, &mut init_doc_rng(cfg.base.seed, 0));

    let step = |u: usize, lr: f64, rng: &mut ChaCha8Rng, s: &mut Scratch| {
        let mut kept = std::mem::take(&mut s.ctx);
        let mut negs = std::mem::take(&mut s.neg);
        let mut ctx = Vec::new();
        subsample(&vocab, &streams[u], rng, &mut kept);
        let mut loss = 0.0;
        for pos in 0..kept.len() {
            match cfg.mode {
                D2VMode::PvDmMean => {
                    window(&kept, pos, rng.random_range(1..=cfg.base.window), &mut ctx);
                    draw_negatives(&vocab, cfg.base.negatives, kept[pos], rng, &mut negs);
                    loss += pvdm_step_with(&doc_mat, &word_in, &word_out, u, &ctx, kept[pos], &negs, lr, s);
                }
                D2VMode::PvDbow => {
                    draw_negatives(&vocab, cfg.base.negatives, kept[pos], rng, &mut negs);
                    doc_mat.read_row(u, &mut s.h);
                    s.grad.iter_mut().for_each(|g| *g = 0.0);
                    loss += ns_objective(&s.h, kept[pos], &negs, &word_out, Some(lr), &mut s.grad, &mut s.rows);
                    doc_mat.add_scaled(u, &s.grad, -lr);
                }
            }
        }
        let n = kept.len() as u64;
        s.ctx = kept;
        s.neg = negs;
        (loss, n)
    };
    let len = |u: usize| streams[u].len() as u64;
    let epoch_losses = run_epochs(&cfg.base, streams.len(), &len, step);
    let report = TrainReport {
        epoch_losses,
        vocab_size: vocab.len(),
        corpus_tokens: streams.iter().map(|s| s.len() as u64).sum(),
        empty_docs: docs.iter().zip(&streams).filter(|(_, s)| s.is_empty()).map(|(d, _)| d.0.clone()).collect(),
    };
    Ok(D2VModel {
        config: cfg.clone(),
        dataset_kind: kind,
        vocab,
        word_in,
        word_out,
        docs: doc_mat,
        doc_ids: docs.iter().map(|d| d.0.clone()).collect(),
        doc_index,
        report,
    })
}
