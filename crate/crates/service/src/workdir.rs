use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use polariscope::corpus::PartyKind;
use polariscope::embed::{DatasetKind, Provenance};
use serde::{Deserialize, Serialize};

/// Where a candidate embedding set came from, as named on the command line
/// and in API query strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    D2v,
    External,
}

impl Source {
    pub const ALL: [Source; 2] = [Source::D2v, Source::External];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::D2v => "d2v",
            Source::External => "external",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Source::D2v => "Doc2Vec",
            Source::External => "External",
        }
    }

    pub fn provenance(self) -> Provenance {
        match self {
            Source::D2v => Provenance::TrainedD2V,
            Source::External => Provenance::External,
        }
    }

    pub fn parse(s: &str) -> Option<Source> {
        match s {
            "d2v" | "doc2vec" => Some(Source::D2v),
            "external" => Some(Source::External),
            _ => None,
        }
    }
}

pub const CANDIDATE_KINDS: [DatasetKind; 2] = [DatasetKind::Political, DatasetKind::Background];

pub fn kind_label(kind: DatasetKind) -> &'static str {
    match kind {
        DatasetKind::Political => "Political",
        DatasetKind::Background => "Background",
        DatasetKind::Other => "Other",
        DatasetKind::WholePage => "Whole page",
    }
}

pub fn party_slug(p: PartyKind) -> &'static str {
    match p {
        PartyKind::Democratic => "dem",
        PartyKind::Republican => "rep",
        PartyKind::Other => "other",
    }
}

/// File layout of a pipeline working directory. A finished working
/// directory is also what `serve` loads as a snapshot.
#[derive(Debug, Clone)]
pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workdir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.root.join("cache")
    }

    pub fn raw_corpus(&self) -> PathBuf {
        self.root.join("corpus.raw.jsonl")
    }

    pub fn annotated_corpus(&self) -> PathBuf {
        self.root.join("corpus.annotated.jsonl")
    }

    pub fn clean_corpus(&self) -> PathBuf {
        self.root.join("corpus.jsonl")
    }

    pub fn embeddings(&self, kind: DatasetKind, src: Source) -> PathBuf {
        self.root.join("embeddings").join(format!("{}.{}.pemb", kind.as_str(), src.as_str()))
    }

    pub fn index(&self, kind: DatasetKind, src: Source) -> PathBuf {
        self.root.join("indexes").join(format!("{}.{}.pann", kind.as_str(), src.as_str()))
    }

    pub fn words_dir(&self) -> PathBuf {
        self.root.join("words")
    }

    pub fn words(&self, party: PartyKind, phase: Option<u8>) -> PathBuf {
        let phase = phase.map_or("all".to_string(), |p| format!("p{p}"));
        self.words_dir().join(format!("{}-{phase}.pemb", party_slug(party)))
    }

    pub fn attention(&self) -> PathBuf {
        self.root.join("attention.jsonl")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.reports().join(name)
    }

    /// Path relative to the root, with forward slashes, as recorded in the
    /// run manifest.
    pub fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).to_string_lossy().replace('\\', "/")
    }

    /// Fails with a message naming the subcommand that produces `path`.
    pub fn require(&self, path: &Path, producer: &str) -> Result<()> {
        if !path.exists() {
            bail!("{} not found; run `polariscope {producer}` first", path.display());
        }
        Ok(())
    }
}
