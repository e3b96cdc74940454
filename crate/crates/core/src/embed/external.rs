use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::set::{norm, parse_pemb, PEMB_MAGIC, NORM_TOLERANCE};
use super::{DatasetKind, EmbedError, EmbeddingSet, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalManifest {
    pub dataset_kind: DatasetKind,
    /// Relative paths resolve against the manifest's directory.
    pub file: PathBuf,
    pub normalized: bool,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct ExternalLoad {
    pub set: EmbeddingSet,
    pub manifest: ExternalManifest,
    /// Ids in the file that are not in the corpus.
    pub orphans: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VectorLine {
    id: String,
    vector: Vec<f32>,
}

/// Parses `{"id", "vector"}` lines. All vectors must share one dimension.
pub fn parse_vectors_jsonl(text: &str, kind: DatasetKind) -> Result<EmbeddingSet, EmbedError> {
    let mut set: Option<EmbeddingSet> = None;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EmbedError::Line { line: n + 1, message };
        let rec: VectorLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let s = set.get_or_insert_with(|| EmbeddingSet::new(rec.vector.len(), kind, Provenance::External));
        s.push(rec.id, rec.vector).map_err(|e| err(e.to_string()))?;
    }
    set.ok_or(EmbedError::Line { line: 0, message: "no vectors".into() })
}

/// Loads externally computed vectors described by a manifest. Binary files
/// are recognized by their magic; anything else is read as JSON Lines. When
/// `corpus_ids` is given, ids outside it are kept but listed as orphans.
pub fn load_external_embeddings(manifest_path: &Path, corpus_ids: Option<&HashSet<String>>) -> Result<ExternalLoad, EmbedError> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| EmbedError::Io(format!("{}: {e}", p.display())));
    let manifest: ExternalManifest = serde_json::from_slice(&read(manifest_path)?)
        .map_err(|e| EmbedError::Line { line: 0, message: format!("manifest {}: {e}", manifest_path.display()) })?;
    let path = if manifest.file.is_absolute() {
        manifest.file.clone()
    } else {
        manifest_path.parent().unwrap_or(Path::new(".")).join(&manifest.file)
    };
    let bytes = read(&path)?;
    let set = if bytes.starts_with(PEMB_MAGIC) {
        parse_pemb(&bytes, manifest.dataset_kind, Provenance::External)?
    } else {
        let text = String::from_utf8(bytes).map_err(|_| EmbedError::Io(format!("{}: not UTF-8", path.display())))?;
        parse_vectors_jsonl(&text, manifest.dataset_kind)?
    };
    if manifest.normalized && !set.is_normalized() {
        let bad = set.iter().find(|(_, v)| (norm(v) - 1.0).abs() > NORM_TOLERANCE).map(|(id, _)| id.to_string());
        return Err(EmbedError::Line { line: 0, message: format!("manifest says normalized but {bad:?} is not unit length") });
    }
    let orphans = match corpus_ids {
        Some(ids) => set.ids().iter().filter(|i| !ids.contains(*i)).cloned().collect(),
        None => Vec::new(),
    };
    Ok(ExternalLoad { set, manifest, orphans })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub scores: Vec<f64>,
    #[serde(default)]
    pub layer_note: String,
}

impl AttentionRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.tokens.len() != self.scores.len() {
            return Err(format!("{} tokens but {} scores", self.tokens.len(), self.scores.len()));
        }
        if let Some((i, s)) = self.scores.iter().enumerate().find(|(_, s)| !s.is_finite() || **s < 0.0) {
            return Err(format!("score {i} is {s}; scores must be finite and non-negative"));
        }
        Ok(())
    }
}

pub fn parse_attention(text: &str) -> Result<Vec<AttentionRecord>, EmbedError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EmbedError::Line { line: n + 1, message };
        let rec: AttentionRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        rec.validate().map_err(&err)?;
        if !seen.insert(rec.id.clone()) {
            return Err(err(format!("duplicate id {:?}", rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_attention_scores(path: &Path) -> Result<Vec<AttentionRecord>, EmbedError> {
    let text = std::fs::read_to_string(path).map_err(|e| EmbedError::Io(format!("{}: {e}", path.display())))?;
    parse_attention(&text)
}
