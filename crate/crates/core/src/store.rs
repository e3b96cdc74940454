//! Flat-file persistence: the corpus as canonical JSON Lines, embedding sets
//! and indexes in their binary formats, SHA-256 sidecars, and the run
//! manifest that decides whether a stage can be skipped.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ann::{AnnError, AnnIndex};
use crate::corpus::Politician;
use crate::embed::{parse_pemb, write_pemb, DatasetKind, EmbedError, EmbeddingSet, Provenance};

pub const CORPUS_FORMAT: &str = "polariscope-corpus";
pub const CORPUS_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("line {line}, field `{field}`: {message}")]
    Schema { line: usize, field: String, message: String },
    #[error("{path}: checksum mismatch (expected {expected}, found {found})")]
    Integrity { path: PathBuf, expected: String, found: String },
    #[error("unsupported corpus version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Ann(#[from] AnnError),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> StoreError + '_ {
    move |e| StoreError::Io { path: path.to_path_buf(), message: e.to_string() }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Path of the checksum sidecar for `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".sha256");
    PathBuf::from(s)
}

/// Writes `bytes` via a temporary file and rename, then the sidecar.
/// Returns the checksum.
pub fn write_with_checksum(path: &Path, bytes: &[u8]) -> Result<String, StoreError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    let sum = sha256_hex(bytes);
    let side = sidecar_path(path);
    fs::write(&side, format!("{sum}\n")).map_err(io_err(&side))?;
    Ok(sum)
}

/// Reads a file and, when a sidecar exists, verifies it.
pub fn read_verified(path: &Path) -> Result<Vec<u8>, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let side = sidecar_path(path);
    if side.exists() {
        let expected = fs::read_to_string(&side).map_err(io_err(&side))?.trim().to_string();
        let found = sha256_hex(&bytes);
        if expected != found {
            return Err(StoreError::Integrity { path: path.to_path_buf(), expected, found });
        }
    }
    Ok(bytes)
}

fn canonical_into(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string serializes"));
                out.push(':');
                canonical_into(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, x) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonical_into(x, out);
            }
            out.push(']');
        }
        other => out.push_str(&serde_json::to_string(other).expect("scalar serializes")),
    }
}

/// JSON with object keys sorted and no insignificant whitespace.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("value serializes");
    let mut out = String::new();
    canonical_into(&v, &mut out);
    out
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusHeader {
    format: String,
    version: u32,
    count: usize,
}

pub fn corpus_to_string(corpus: &[Politician]) -> String {
    let header = CorpusHeader { format: CORPUS_FORMAT.into(), version: CORPUS_VERSION, count: corpus.len() };
    let mut out = canonical_json(&header);
    out.push('\n');
    for p in corpus {
        out.push_str(&canonical_json(p));
        out.push('\n');
    }
    out
}

fn parse_line<T: serde::de::DeserializeOwned>(line: &str, n: usize) -> Result<T, StoreError> {
    let de = &mut serde_json::Deserializer::from_str(line);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        StoreError::Schema { line: n, field, message: e.into_inner().to_string() }
    })
}

pub fn parse_corpus(text: &str) -> Result<Vec<Politician>, StoreError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or(StoreError::Schema { line: 1, field: ".".into(), message: "missing header".into() })?;
    let header: CorpusHeader = parse_line(first, 1)?;
    if header.format != CORPUS_FORMAT {
        return Err(StoreError::Schema { line: 1, field: "format".into(), message: format!("expected {CORPUS_FORMAT:?}, found {:?}", header.format) });
    }
    if header.version != CORPUS_VERSION {
        return Err(StoreError::UnsupportedVersion { found: header.version, supported: CORPUS_VERSION });
    }
    let mut out = Vec::with_capacity(header.count);
    let mut seen = std::collections::HashSet::new();
    let mut last = 1;
    for (n, line) in lines {
        last = n;
        if line.trim().is_empty() {
            return Err(StoreError::Schema { line: n, field: ".".into(), message: "blank line".into() });
        }
        let p: Politician = parse_line(line, n)?;
        p.party.check().map_err(|e| StoreError::Schema { line: n, field: "party".into(), message: e.to_string() })?;
        if let Some(t) = p.terms.iter().find(|t| t.ordinal() == 0) {
            return Err(StoreError::Schema { line: n, field: "terms".into(), message: format!("invalid congress {}", t.ordinal()) });
        }
        if !seen.insert(p.id.clone()) {
            return Err(StoreError::Schema { line: n, field: "id".into(), message: format!("duplicate id {:?}", p.id) });
        }
        out.push(p);
    }
    if out.len() != header.count {
        return Err(StoreError::Schema {
            line: last,
            field: "count".into(),
            message: format!("header declares {} records, file has {}", header.count, out.len()),
        });
    }
    Ok(out)
}

/// Returns the SHA-256 of the written file, also stored in the sidecar.
pub fn save_corpus(corpus: &[Politician], path: &Path) -> Result<String, StoreError> {
    write_with_checksum(path, corpus_to_string(corpus).as_bytes())
}

pub fn load_corpus(path: &Path) -> Result<Vec<Politician>, StoreError> {
    let bytes = read_verified(path)?;
    let text = String::from_utf8(bytes).map_err(|e| StoreError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    parse_corpus(&text)
}

pub fn save_embeddings(set: &EmbeddingSet, path: &Path) -> Result<String, StoreError> {
    let mut buf = Vec::new();
    write_pemb(set, &mut buf)?;
    write_with_checksum(path, &buf)
}

pub fn load_embeddings(path: &Path, kind: DatasetKind, provenance: Provenance) -> Result<EmbeddingSet, StoreError> {
    Ok(parse_pemb(&read_verified(path)?, kind, provenance)?)
}

pub fn save_index(index: &AnnIndex, path: &Path) -> Result<String, StoreError> {
    write_with_checksum(path, &index.to_bytes())
}

pub fn load_index(path: &Path, set: EmbeddingSet) -> Result<AnnIndex, StoreError> {
    Ok(AnnIndex::from_bytes(&read_verified(path)?, set)?)
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<String, StoreError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_with_checksum(path, text.as_bytes())
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let bytes = read_verified(path)?;
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        StoreError::Schema { line: inner.line(), field, message: inner.to_string() }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub fingerprint: String,
    /// Artifact paths relative to the work directory, with their checksums.
    pub outputs: BTreeMap<String, String>,
    pub completed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for RunManifest {
    fn default() -> Self {
        let now = Utc::now();
        RunManifest { tool_version: TOOL_VERSION.into(), created_at: now, updated_at: now, stages: BTreeMap::new() }
    }
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn load_or_default(workdir: &Path) -> Result<Self, StoreError> {
        let path = workdir.join(Self::FILE);
        if path.exists() {
            load_json(&path)
        } else {
            Ok(RunManifest::default())
        }
    }

    pub fn save(&self, workdir: &Path) -> Result<(), StoreError> {
        save_json(self, &workdir.join(Self::FILE)).map(|_| ())
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.get(name)
    }

    /// True when the stage last ran with `fingerprint` and every output it
    /// recorded is still present with the recorded checksum.
    pub fn is_cache_valid(&self, workdir: &Path, name: &str, fingerprint: &str) -> bool {
        let Some(rec) = self.stages.get(name) else { return false };
        rec.fingerprint == fingerprint
            && rec.outputs.iter().all(|(rel, sum)| fs::read(workdir.join(rel)).is_ok_and(|b| &sha256_hex(&b) == sum))
    }

    pub fn record(&mut self, name: &str, fingerprint: String, outputs: BTreeMap<String, String>) {
        let now = Utc::now();
        self.updated_at = now;
        self.tool_version = TOOL_VERSION.into();
        self.stages.insert(name.to_string(), StageRecord { fingerprint, outputs, completed_at: now });
    }
}

/// Fingerprint of a stage from its parts, order-sensitive.
pub fn stage_fingerprint(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..12])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::AnnParams;
    use crate::corpus::{Category, CategoryBundle, Chamber, CleanBundle, CongressTerm, Party, Section, SectionMap};
    use proptest::prelude::*;

    fn politician(id: &str, text: &str) -> Politician {
        Politician {
            id: id.into(),
            display_name: format!("Name \"{id}\" ü"),
            party: if id.len() % 2 == 0 { Party::democratic() } else { Party::other("Progressive").unwrap() },
            chamber: Chamber::Senate,
            terms: [CongressTerm(100), CongressTerm(101)].into_iter().collect(),
            phases: [3u8].into_iter().collect(),
            sections: SectionMap::from_entries(vec![
                Section { heading: "__lead__".into(), text: text.into() },
                Section { heading: "Early life".into(), text: "b\n\tc".into() },
            ]),
            categories: Some(CategoryBundle { background: "x".into(), political: text.into(), other: String::new() }),
            clean: Some(CleanBundle { background: "x".into(), political: "y".into(), other: String::new(), policy_id: "abc".into() }),
        }
    }

    #[test]
    fn corpus_round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let corpus = vec![politician("ab", "lead"), politician("abc", "{\"json\": 1}")];
        let sum = save_corpus(&corpus, &path).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), corpus);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), corpus.len() + 1);
        assert_eq!(text.lines().next().unwrap(), r#"{"count":2,"format":"polariscope-corpus","version":1}"#);
        assert_eq!(sum, sha256_hex(text.as_bytes()));
        // Keys sorted at every level.
        assert!(text.lines().nth(1).unwrap().starts_with(r#"{"categories":{"background":"#));
        assert_eq!(corpus[0].clean.as_ref().unwrap().get(Category::Political), "y");
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        save_corpus(&[politician("ab", "lead text")], &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let i = bytes.len() - 5;
        bytes[i] ^= 0x01;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_corpus(&path), Err(StoreError::Integrity { .. })));
    }

    #[test]
    fn schema_errors_name_line_and_field() {
        let good = corpus_to_string(&[politician("ab", "x"), politician("abc", "y")]);
        let truncated: String = good.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_corpus(&truncated), Err(StoreError::Schema { field, .. }) if field == "count"));
        let bad = good.replace("\"chamber\":\"senate\"", "\"chamber\":\"house of lords\"").replace("\"chamber\":\"Senate\"", "\"chamber\":\"Lords\"");
        match parse_corpus(&bad) {
            Err(StoreError::Schema { line: 2, field, .. }) => assert_eq!(field, "chamber"),
            other => panic!("{other:?}"),
        }
        let extra = good.replacen("\"display_name\"", "\"nickname\":1,\"display_name\"", 1);
        assert!(matches!(parse_corpus(&extra), Err(StoreError::Schema { line: 2, .. })));
        let future = good.replace("\"version\":1", "\"version\":9");
        assert!(matches!(parse_corpus(&future), Err(StoreError::UnsupportedVersion { found: 9, .. })));
        let dup = format!("{}{}", good.replace("\"count\":2", "\"count\":3"), good.lines().nth(1).unwrap());
        assert!(matches!(parse_corpus(&dup), Err(StoreError::Schema { line: 4, .. })));
    }

    #[test]
    fn embeddings_and_index_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = EmbeddingSet::new(3, DatasetKind::Political, Provenance::TrainedD2V);
        for i in 0..40 {
            let a = i as f32 * 0.37;
            set.push(format!("m{i}"), vec![a.cos(), a.sin(), 0.3 + (i % 3) as f32]).unwrap();
        }
        set.normalize().unwrap();
        let pe = dir.path().join("political.pemb");
        save_embeddings(&set, &pe).unwrap();
        let back = load_embeddings(&pe, DatasetKind::Political, Provenance::TrainedD2V).unwrap();
        assert_eq!(back.ids(), set.ids());
        assert!(set.iter().zip(back.iter()).all(|(a, b)| a.1.iter().zip(b.1).all(|(x, y)| x.to_bits() == y.to_bits())));
        let idx = AnnIndex::build(set.clone(), AnnParams { n_trees: 5, leaf_capacity: 4, seed: 1 }).unwrap();
        let pa = dir.path().join("political.pann");
        save_index(&idx, &pa).unwrap();
        let reloaded = load_index(&pa, back).unwrap();
        for id in set.ids() {
            let a = idx.query_id(id, 5, Some(12)).unwrap();
            let b = reloaded.query_id(id, 5, Some(12)).unwrap();
            assert_eq!(a, b);
        }
        for p in [&pe, &pa] {
            let mut bytes = fs::read(p).unwrap();
            let mid = bytes.len() / 2;
            bytes[mid] = bytes[mid].wrapping_add(1);
            fs::write(p, &bytes).unwrap();
        }
        assert!(matches!(load_embeddings(&pe, DatasetKind::Political, Provenance::TrainedD2V), Err(StoreError::Integrity { .. })));
        assert!(matches!(load_index(&pa, set), Err(StoreError::Integrity { .. })));
    }

    #[test]
    fn manifest_cache_validity() {
        let dir = tempfile::tempdir().unwrap();
        let w = dir.path();
        let sum = write_with_checksum(&w.join("a.bin"), b"hello").unwrap();
        let mut m = RunManifest::load_or_default(w).unwrap();
        m.record("train", stage_fingerprint(&["cfg", "corpus"]), BTreeMap::from([("a.bin".to_string(), sum)]));
        m.save(w).unwrap();
        let m = RunManifest::load_or_default(w).unwrap();
        assert!(m.is_cache_valid(w, "train", &stage_fingerprint(&["cfg", "corpus"])));
        assert!(!m.is_cache_valid(w, "train", &stage_fingerprint(&["cfg2", "corpus"])));
        assert!(!m.is_cache_valid(w, "index", "x"));
        fs::write(w.join("a.bin"), b"hellO").unwrap();
        assert!(!m.is_cache_valid(w, "train", &stage_fingerprint(&["cfg", "corpus"])));
        assert_ne!(stage_fingerprint(&["ab", "c"]), stage_fingerprint(&["a", "bc"]));
    }

    proptest! {
        #[test]
        fn corpus_round_trips(texts in proptest::collection::vec("\\PC{0,40}", 1..5)) {
            let corpus: Vec<Politician> = texts.iter().enumerate().map(|(i, t)| politician(&format!("id{i:0>w$}", w = i + 1), t)).collect();
            prop_assert_eq!(parse_corpus(&corpus_to_string(&corpus)).unwrap(), corpus);
        }
    }
}
