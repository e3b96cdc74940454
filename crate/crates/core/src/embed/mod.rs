//! Word and document embeddings trained from scratch (skip-gram with negative
//! sampling, paragraph vectors), embedding sets with their binary format,
//! and loaders for externally computed vectors and attention scores.

mod doc2vec;
mod external;
mod matrix;
mod set;
mod sgns;
mod vocab;
mod word2vec;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use doc2vec::{train_doc2vec, D2VConfig, D2VMode, D2VModel, Inferred};
pub use external::{
    load_attention_scores, load_external_embeddings, parse_attention, parse_vectors_jsonl, AttentionRecord, ExternalLoad,
    ExternalManifest,
};
pub use matrix::SharedMatrix;
pub use set::{cosine, norm, parse_pemb, read_pemb, write_pemb, DatasetKind, EmbeddingSet, Provenance, PEMB_VERSION};
pub use sgns::{log_sigmoid, pvdm_step, sgns_step, sigmoid};
pub use vocab::{build_vocab, keep_probability, Vocab};
pub use word2vec::{train_word2vec, TrainReport, W2VConfig, W2VModel};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("vocabulary is empty after applying min_count")]
    EmptyVocab,
    #[error("no documents to train on")]
    NoDocuments,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("{id}: expected dimension {expected}, found {found}")]
    DimMismatch { id: String, expected: usize, found: usize },
    #[error("{0}: vector has non-finite entries")]
    NonFinite(String),
    #[error("{0}: zero vector cannot be normalized")]
    ZeroVector(String),
    #[error("bad magic: expected {expected}, found {found:?}")]
    BadMagic { expected: &'static str, found: String },
    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

/// Lowercases and splits on anything that is not a letter or digit. Every
/// embedding path tokenizes through here.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Short content hash of a serializable config.
pub(crate) fn fingerprint_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("The Senator's  GUN-control bill, 2nd!"), ["the", "senator", "s", "gun", "control", "bill", "2nd"]);
        assert!(tokenize(" ,; ").is_empty());
    }
}
