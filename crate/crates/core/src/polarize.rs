//! Polarization metrics: nearest-neighbor party ratio per candidate, word
//! neighbor ranks across party corpora, era drift, and top-percentile
//! attention words.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ann::{exact_knn, AnnError, AnnIndex};
use crate::corpus::{PartyKind, PhaseTable};
use crate::embed::{AttentionRecord, DatasetKind, EmbeddingSet};

pub const BASELINE: f64 = 0.5;
pub const DEFAULT_K: usize = 20;
pub const DEFAULT_WORD_K: usize = 15;
pub const DEFAULT_PERCENTILE: f64 = 90.0;

/// Tokens never selected by attention ranking.
pub const SPECIAL_TOKENS: &[&str] =
    &["<s>", "</s>", "<pad>", "<mask>", "<unk>", "<ent>", "[CLS]", "[SEP]", "[PAD]", "[MASK]", "[UNK]"];

#[derive(Debug, Error)]
pub enum PolarizeError {
    #[error("unknown id {0:?}")]
    UnknownId(String),
    #[error("no party recorded for {0:?}")]
    UnknownParty(String),
    #[error("{0:?} is not Democratic or Republican")]
    NotMajorParty(String),
    #[error("k={k} neighbors requested but only {available} eligible candidates exist")]
    InsufficientPopulation { k: usize, available: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("{0:?} is out of vocabulary in every model")]
    OutOfVocabulary(String),
    #[error("{0}: attention record has no scorable tokens")]
    EmptyRecord(String),
    #[error("percentile {0} outside [0, 100]")]
    Percentile(f64),
    #[error("nothing to summarize")]
    Empty,
    #[error(transparent)]
    Ann(#[from] AnnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedNeighbor {
    pub rank: usize,
    pub id: String,
    pub party: PartyKind,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationScore {
    pub id: String,
    pub party: PartyKind,
    pub dataset_kind: DatasetKind,
    pub k: usize,
    pub neighbors: Vec<RankedNeighbor>,
    pub neighbor_parties: Vec<PartyKind>,
    pub same_party_count: usize,
    /// `same_party_count / k`.
    pub ratio: f64,
    /// Democratic neighbors over `k`, the alternative reading of the ratio.
    pub democrat_share: f64,
    pub baseline: f64,
}

/// Same-party count and ratio for a list of neighbor parties.
pub fn party_ratio(own: PartyKind, neighbor_parties: &[PartyKind]) -> (usize, f64) {
    let same = neighbor_parties.iter().filter(|&&p| p == own).count();
    let ratio = if neighbor_parties.is_empty() { 0.0 } else { same as f64 / neighbor_parties.len() as f64 };
    (same, ratio)
}

fn score_from_neighbors(id: &str, own: PartyKind, kind: DatasetKind, neighbors: Vec<RankedNeighbor>) -> PolarizationScore {
    let parties: Vec<PartyKind> = neighbors.iter().map(|n| n.party).collect();
    let (same, ratio) = party_ratio(own, &parties);
    let dem = parties.iter().filter(|&&p| p == PartyKind::Democratic).count();
    PolarizationScore {
        id: id.to_string(),
        party: own,
        dataset_kind: kind,
        k: parties.len(),
        democrat_share: if parties.is_empty() { 0.0 } else { dem as f64 / parties.len() as f64 },
        neighbor_parties: parties,
        neighbors,
        same_party_count: same,
        ratio,
        baseline: BASELINE,
    }
}

/// The `k` nearest Democratic or Republican neighbors of `id`, excluding the
/// candidate itself. The query asks for `k + 1 + #Other` items and widens
/// if approximate search returns too few eligible ones.
pub fn eligible_neighbors(
    index: &AnnIndex,
    id: &str,
    k: usize,
    parties: &HashMap<String, PartyKind>,
    search_k: Option<usize>,
) -> Result<Vec<RankedNeighbor>, PolarizeError> {
    if k == 0 {
        return Err(PolarizeError::ZeroK);
    }
    let set = index.set();
    let q = set.get(id).ok_or_else(|| PolarizeError::UnknownId(id.to_string()))?;
    let mut others = 0;
    let mut available = 0;
    for other in set.ids() {
        let p = *parties.get(other).ok_or_else(|| PolarizeError::UnknownParty(other.clone()))?;
        if p == PartyKind::Other {
            others += 1;
        } else if other != id {
            available += 1;
        }
    }
    if available < k {
        return Err(PolarizeError::InsufficientPopulation { k, available });
    }
    let mut want = (k + 1 + others).min(set.len());
    loop {
        let sk = search_k.map(|s| s.max(want));
        let hits = index.query(q, want, sk)?;
        let eligible: Vec<RankedNeighbor> = hits
            .into_iter()
            .filter(|n| n.id != id && parties[&n.id] != PartyKind::Other)
            .take(k)
            .enumerate()
            .map(|(i, n)| RankedNeighbor { rank: i + 1, party: parties[&n.id], id: n.id, score: n.score })
            .collect();
        if eligible.len() == k {
            return Ok(eligible);
        }
        if want == set.len() {
            // The forest missed some items; fall back to a full scan.
            let all = exact_knn(set, q, set.len())?;
            return Ok(all
                .into_iter()
                .filter(|n| n.id != id && parties[&n.id] != PartyKind::Other)
                .take(k)
                .enumerate()
                .map(|(i, n)| RankedNeighbor { rank: i + 1, party: parties[&n.id], id: n.id, score: n.score })
                .collect());
        }
        want = (want * 2).min(set.len());
    }
}

pub fn candidate_polarization(
    index: &AnnIndex,
    id: &str,
    k: usize,
    parties: &HashMap<String, PartyKind>,
    search_k: Option<usize>,
) -> Result<PolarizationScore, PolarizeError> {
    let own = *parties.get(id).ok_or_else(|| {
        if index.set().position(id).is_none() {
            PolarizeError::UnknownId(id.to_string())
        } else {
            PolarizeError::UnknownParty(id.to_string())
        }
    })?;
    if own == PartyKind::Other {
        return Err(PolarizeError::NotMajorParty(id.to_string()));
    }
    let neighbors = eligible_neighbors(index, id, k, parties, search_k)?;
    Ok(score_from_neighbors(id, own, index.set().dataset_kind, neighbors))
}

/// Scores every major-party member of the index. Members for whom the
/// population is too small are skipped.
pub fn polarize_all(
    index: &AnnIndex,
    k: usize,
    parties: &HashMap<String, PartyKind>,
) -> Result<Vec<PolarizationScore>, PolarizeError> {
    use rayon::prelude::*;
    let ids: Vec<&String> = index.set().ids().iter().filter(|i| parties.get(*i).is_some_and(|p| *p != PartyKind::Other)).collect();
    let results: Vec<Result<PolarizationScore, PolarizeError>> =
        ids.par_iter().map(|id| candidate_polarization(index, id, k, parties, None)).collect();
    let mut out = Vec::new();
    for r in results {
        match r {
            Ok(s) => out.push(s),
            Err(PolarizeError::InsufficientPopulation { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CorpusTag {
    pub party: PartyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedToken {
    pub rank: usize,
    pub token: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordNeighborReport {
    pub word: String,
    pub tag: CorpusTag,
    pub oov: bool,
    /// Rank 1 is the word itself.
    pub neighbors: Vec<RankedToken>,
    /// Rank of each probe within the full vocabulary ordering, or `None`
    /// when the probe is out of vocabulary.
    pub probe_ranks: BTreeMap<String, Option<usize>>,
}

/// Cosine neighbors of `word` among a model's normalized word vectors.
pub fn word_neighbors(vectors: &EmbeddingSet, tag: CorpusTag, word: &str, probes: &[&str], k: usize) -> Result<WordNeighborReport, PolarizeError> {
    if k == 0 {
        return Err(PolarizeError::ZeroK);
    }
    let mut report = WordNeighborReport { word: word.to_string(), tag, oov: true, neighbors: Vec::new(), probe_ranks: BTreeMap::new() };
    let Some(q) = vectors.get(word) else {
        report.probe_ranks = probes.iter().map(|p| (p.to_string(), None)).collect();
        return Ok(report);
    };
    report.oov = false;
    let full = exact_knn(vectors, q, vectors.len())?;
    let position: HashMap<&str, usize> = full.iter().enumerate().map(|(i, n)| (n.id.as_str(), i + 1)).collect();
    report.probe_ranks = probes.iter().map(|p| (p.to_string(), position.get(p).copied())).collect();
    report.neighbors =
        full.into_iter().take(k).enumerate().map(|(i, n)| RankedToken { rank: i + 1, token: n.id, score: n.score }).collect();
    Ok(report)
}

/// Reports for the same word in two corpora, in argument order. Out of
/// vocabulary in one corpus gives a flagged partial report; in both, an
/// error.
pub fn word_neighbor_ranks(
    a: (&EmbeddingSet, CorpusTag),
    b: (&EmbeddingSet, CorpusTag),
    word: &str,
    probes: &[&str],
    k: usize,
) -> Result<(WordNeighborReport, WordNeighborReport), PolarizeError> {
    let ra = word_neighbors(a.0, a.1, word, probes, k)?;
    let rb = word_neighbors(b.0, b.1, word, probes, k)?;
    if ra.oov && rb.oov {
        return Err(PolarizeError::OutOfVocabulary(word.to_string()));
    }
    Ok((ra, rb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseNeighbors {
    pub phase: u8,
    /// `None` when the phase has no model or the word is not in it.
    pub neighbors: Option<Vec<RankedToken>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EraDriftReport {
    pub word: String,
    pub party: PartyKind,
    pub phases: Vec<PhaseNeighbors>,
}

pub fn era_drift(
    models: &BTreeMap<u8, EmbeddingSet>,
    table: &PhaseTable,
    party: PartyKind,
    word: &str,
    k: usize,
) -> Result<EraDriftReport, PolarizeError> {
    let mut phases = Vec::new();
    for ph in table.phases() {
        let neighbors = match models.get(&ph.index) {
            Some(set) => {
                let r = word_neighbors(set, CorpusTag { party, phase: Some(ph.index) }, word, &[], k)?;
                (!r.oov).then_some(r.neighbors)
            }
            None => None,
        };
        phases.push(PhaseNeighbors { phase: ph.index, neighbors });
    }
    if phases.iter().all(|p| p.neighbors.is_none()) {
        return Err(PolarizeError::OutOfVocabulary(word.to_string()));
    }
    Ok(EraDriftReport { word: word.to_string(), party, phases })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredToken {
    pub token: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTopWords {
    pub id: String,
    pub percentile: f64,
    pub threshold: f64,
    /// Distinct surface tokens at or above the threshold, highest first.
    pub tokens: Vec<ScoredToken>,
}

pub fn is_special_token(t: &str) -> bool {
    SPECIAL_TOKENS.contains(&t)
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p/100 * n)`
/// (at least 1) of the ascending scores.
pub fn nearest_rank(sorted_ascending: &[f64], p: f64) -> f64 {
    let n = sorted_ascending.len();
    let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    sorted_ascending[rank - 1]
}

/// Special tokens are removed before the threshold is computed.
pub fn attention_top_words(record: &AttentionRecord, p: f64) -> Result<AttentionTopWords, PolarizeError> {
    if !(0.0..=100.0).contains(&p) {
        return Err(PolarizeError::Percentile(p));
    }
    let scored: Vec<(&str, f64)> =
        record.tokens.iter().zip(&record.scores).filter(|(t, _)| !is_special_token(t)).map(|(t, &s)| (t.as_str(), s)).collect();
    if scored.is_empty() {
        return Err(PolarizeError::EmptyRecord(record.id.clone()));
    }
    let mut sorted: Vec<f64> = scored.iter().map(|&(_, s)| s).collect();
    sorted.sort_by(f64::total_cmp);
    let threshold = nearest_rank(&sorted, p);
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for &(t, s) in scored.iter().filter(|&&(_, s)| s >= threshold) {
        let e = best.entry(t).or_insert(s);
        *e = e.max(s);
    }
    let mut tokens: Vec<ScoredToken> = best.into_iter().map(|(t, s)| ScoredToken { token: t.to_string(), score: s }).collect();
    tokens.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.token.cmp(&b.token)));
    Ok(AttentionTopWords { id: record.id.clone(), percentile: p, threshold, tokens })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Party,
    Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub group: String,
    pub count: usize,
    pub mean_ratio: f64,
    /// Buckets `[0,0.1) … [0.8,0.9)` and a closed last bucket `[0.9,1.0]`.
    pub histogram: [usize; 10],
}

fn bucket(s: &PolarizationScore) -> usize {
    if s.k == 0 {
        return 0;
    }
    (10 * s.same_party_count / s.k).min(9)
}

/// Rows are sorted by group name and followed by an `all` row. A member
/// serving in several phases is counted once in each.
pub fn cohort_summary(scores: &[PolarizationScore], group_by: GroupBy, phases: &HashMap<String, BTreeSet<u8>>) -> Result<Vec<CohortRow>, PolarizeError> {
    if scores.is_empty() {
        return Err(PolarizeError::Empty);
    }
    let mut groups: BTreeMap<String, Vec<&PolarizationScore>> = BTreeMap::new();
    for s in scores {
        match group_by {
            GroupBy::Party => groups.entry(format!("{:?}", s.party).to_lowercase()).or_default().push(s),
            GroupBy::Phase => {
                for ph in phases.get(&s.id).into_iter().flatten() {
                    groups.entry(format!("phase-{ph}")).or_default().push(s);
                }
            }
        }
    }
    groups.insert("all".into(), scores.iter().collect());
    let row = |group: String, members: Vec<&PolarizationScore>| {
        let mut histogram = [0usize; 10];
        for s in &members {
            histogram[bucket(s)] += 1;
        }
        let mean_ratio = members.iter().map(|s| s.ratio).sum::<f64>() / members.len() as f64;
        CohortRow { group, count: members.len(), mean_ratio, histogram }
    };
    let all = groups.remove("all").expect("inserted above");
    let mut rows: Vec<CohortRow> = groups.into_iter().map(|(g, m)| row(g, m)).collect();
    rows.push(row("all".into(), all));
    Ok(rows)
}

/// One line per score: id, party, dataset, k, same-party count, ratio,
/// democrat share, and the neighbor ids in rank order separated by `;`.
pub fn scores_to_csv(scores: &[PolarizationScore]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "party", "dataset_kind", "k", "same_party_count", "ratio", "democrat_share", "neighbors"]).expect("in-memory write");
    for s in scores {
        let neighbors: Vec<&str> = s.neighbors.iter().map(|n| n.id.as_str()).collect();
        w.write_record([
            s.id.as_str(),
            &format!("{:?}", s.party).to_lowercase(),
            s.dataset_kind.as_str(),
            &s.k.to_string(),
            &s.same_party_count.to_string(),
            &format!("{:.4}", s.ratio),
            &format!("{:.4}", s.democrat_share),
            &neighbors.join(";"),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn cohort_to_csv(rows: &[CohortRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["group".to_string(), "count".into(), "mean_ratio".into()];
    header.extend((0..10).map(|b| format!("bucket_{b}")));
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = vec![r.group.clone(), r.count.to_string(), format!("{:.4}", r.mean_ratio)];
        rec.extend(r.histogram.iter().map(|c| c.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}
