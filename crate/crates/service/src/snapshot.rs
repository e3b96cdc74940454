use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use anyhow::{bail, Context, Result};
use polariscope::ann::AnnIndex;
use polariscope::corpus::{PartyKind, PhaseTable, Politician};
use polariscope::embed::{parse_attention, AttentionRecord, DatasetKind, EmbeddingSet, Provenance};
use polariscope::polarize::PolarizationScore;
use polariscope::store::{load_embeddings, load_index, load_json, read_verified, RunManifest};

use crate::pipeline::{available_sets, party_kinds};
use crate::workdir::{Source, Workdir};

/// Everything the HTTP service answers from. Loaded once at startup and
/// never mutated.
pub struct Snapshot {
    pub corpus: Vec<Politician>,
    by_id: HashMap<String, usize>,
    pub parties: HashMap<String, PartyKind>,
    pub indexes: BTreeMap<(DatasetKind, Source), AnnIndex>,
    pub words: BTreeMap<(PartyKind, Option<u8>), EmbeddingSet>,
    pub attention: Option<HashMap<String, AttentionRecord>>,
    /// Scores written by `polarize`, keyed like `indexes`.
    pub scores: BTreeMap<(DatasetKind, Source), Vec<PolarizationScore>>,
    pub manifest: RunManifest,
    pub phases: PhaseTable,
}

impl Snapshot {
    pub fn load(root: &Path) -> Result<Snapshot> {
        let wd = Workdir::new(root);
        wd.require(&wd.clean_corpus(), "clean")?;
        let corpus = polariscope::store::load_corpus(&wd.clean_corpus())?;
        let by_id: HashMap<String, usize> = corpus.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
        let parties = party_kinds(&corpus);

        let sets = available_sets(&wd);
        if sets.is_empty() {
            wd.require(&wd.embeddings(DatasetKind::Political, Source::D2v), "train")?;
        }
        let mut indexes = BTreeMap::new();
        for (kind, src) in sets {
            wd.require(&wd.index(kind, src), "index")?;
            let set = load_embeddings(&wd.embeddings(kind, src), kind, src.provenance())?;
            if let Some(stray) = set.ids().iter().find(|id| !by_id.contains_key(*id)) {
                bail!("{} holds {stray:?}, which is not in the corpus", wd.embeddings(kind, src).display());
            }
            let index = load_index(&wd.index(kind, src), set).with_context(|| format!("{}; re-run `polariscope index`", wd.index(kind, src).display()))?;
            indexes.insert((kind, src), index);
        }

        let phases = PhaseTable::default();
        let mut words = BTreeMap::new();
        for party in [PartyKind::Democratic, PartyKind::Republican] {
            for phase in std::iter::once(None).chain(phases.phases().iter().map(|p| Some(p.index))) {
                let path = wd.words(party, phase);
                if path.exists() {
                    words.insert((party, phase), load_embeddings(&path, DatasetKind::Political, Provenance::TrainedW2V)?);
                }
            }
        }

        let attention = if wd.attention().exists() {
            let bytes = read_verified(&wd.attention())?;
            let text = String::from_utf8(bytes).context("attention file is not UTF-8")?;
            Some(parse_attention(&text)?.into_iter().map(|r| (r.id.clone(), r)).collect())
        } else {
            None
        };

        let mut scores = BTreeMap::new();
        for (kind, src) in indexes.keys() {
            let path = wd.report(&format!("polarization.{}.{}.json", kind.as_str(), src.as_str()));
            if path.exists() {
                scores.insert((*kind, *src), load_json(&path)?);
            }
        }

        Ok(Snapshot {
            corpus,
            by_id,
            parties,
            indexes,
            words,
            attention,
            scores,
            manifest: RunManifest::load_or_default(root)?,
            phases,
        })
    }

    pub fn politician(&self, id: &str) -> Option<&Politician> {
        self.by_id.get(id).map(|&i| &self.corpus[i])
    }

    pub fn index(&self, kind: DatasetKind, src: Source) -> Option<&AnnIndex> {
        self.indexes.get(&(kind, src))
    }

    pub fn datasets(&self) -> impl Iterator<Item = (DatasetKind, Source)> + '_ {
        self.indexes.keys().copied()
    }

}
