//! The CLI stages. Each stage reads the artifacts of the stages before it,
//! writes its own, and records a fingerprint in the run manifest so that an
//! unchanged re-run is a no-op.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::Utc;
use polariscope::ann::{AnnIndex, AnnParams};
use polariscope::annotate::{merge_categories, AnnotationReport, RuleSet};
use polariscope::classify::{evaluate_kmeans, train_and_evaluate, EvalReport, KMeansConfig, LabeledSet, SplitConfig, SvmConfig};
use polariscope::clean::{clean_corpus, AuditIssue, CleanPolicy, EntityTagger, ExternalFileTagger, Gazetteer, RuleBasedTagger};
use polariscope::corpus::{Category, CongressTerm, Party, PartyKind, PhaseTable, Politician};
use polariscope::embed::{
    load_attention_scores, load_external_embeddings, tokenize, train_doc2vec, train_word2vec, D2VConfig, DatasetKind, EmbedError,
    ExternalManifest, W2VConfig,
};
use polariscope::ingest::{
    fetch_many, fetch_page, merge_identities, parse_roster, parse_sections, FetchCache, FetchMode, FetchOptions, IngestGap, LiveSource,
    PageSource, PartyConflict, Payload, RawPage, RosterEntry, WikipediaClient,
};
use polariscope::polarize::{cohort_summary, cohort_to_csv, polarize_all, scores_to_csv, GroupBy, DEFAULT_K};
use polariscope::store::{
    load_corpus, load_embeddings, load_index, load_json, save_corpus, save_embeddings, save_index, save_json, sha256_hex, stage_fingerprint,
    write_with_checksum, RunManifest, TOOL_VERSION,
};
use serde::{Deserialize, Serialize};

use crate::workdir::{kind_label, Source, Workdir, CANDIDATE_KINDS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: &'static str,
    /// True when the manifest showed the stage already ran with the same
    /// inputs and its outputs are intact.
    pub cached: bool,
    pub outputs: Vec<String>,
    pub summary: String,
}

fn file_sha(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Runs `body` unless the manifest already holds `fingerprint` for `stage`.
/// The body returns the files it wrote and a one-line summary.
fn run_stage(
    wd: &Workdir,
    stage: &'static str,
    fingerprint: String,
    force: bool,
    body: impl FnOnce() -> Result<(Vec<PathBuf>, String)>,
) -> Result<StageOutcome> {
    std::fs::create_dir_all(wd.root()).with_context(|| format!("creating {}", wd.root().display()))?;
    let mut manifest = RunManifest::load_or_default(wd.root())?;
    if !force && manifest.is_cache_valid(wd.root(), stage, &fingerprint) {
        let outputs = manifest.stage(stage).map(|r| r.outputs.keys().cloned().collect()).unwrap_or_default();
        return Ok(StageOutcome { stage, cached: true, outputs, summary: "up to date".into() });
    }
    let (files, summary) = body()?;
    let mut outputs = BTreeMap::new();
    for f in &files {
        outputs.insert(wd.rel(f), file_sha(f)?);
    }
    manifest.record(stage, fingerprint, outputs.clone());
    manifest.save(wd.root())?;
    Ok(StageOutcome { stage, cached: false, outputs: outputs.into_keys().collect(), summary })
}

fn json_string<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config serializes")
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone)]
pub enum IngestSource {
    /// A directory holding `fixture.json` plus the roster and page HTML it lists.
    Fixture(PathBuf),
    /// Roster pages of the given congresses, fetched from Wikipedia unless cached.
    Live { congresses: Vec<u32> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureIndex {
    rosters: Vec<FixtureRoster>,
    pages: Vec<FixturePage>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureRoster {
    congress: u32,
    file: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixturePage {
    title: String,
    file: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestReport {
    pub roster_entries: usize,
    pub politicians: usize,
    pub gaps: Vec<IngestGap>,
    pub party_conflicts: Vec<PartyConflict>,
    pub fetch_errors: Vec<(String, String)>,
}

fn ordinal_suffix(n: u32) -> &'static str {
    match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    }
}

fn html_page(title: &str, html: String, source: PageSource) -> RawPage {
    RawPage { title: title.to_string(), page_id: None, payload: Payload::Html(html), retrieved_at: Utc::now(), source }
}

fn canonical_title(e: &RosterEntry) -> String {
    e.page_title.as_deref().unwrap_or(&e.name).replace('_', " ").split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn ingest(wd: &Workdir, source: &IngestSource, force: bool) -> Result<StageOutcome> {
    let cache = FetchCache::new(wd.cache_dir());
    let (fingerprint, plan) = match source {
        IngestSource::Fixture(dir) => {
            let index_path = dir.join("fixture.json");
            let text = std::fs::read_to_string(&index_path).with_context(|| format!("reading {}", index_path.display()))?;
            let index: FixtureIndex = serde_json::from_str(&text).with_context(|| format!("parsing {}", index_path.display()))?;
            let mut parts = vec!["ingest".to_string(), TOOL_VERSION.to_string(), sha256_hex(text.as_bytes())];
            for f in index.rosters.iter().map(|r| &r.file).chain(index.pages.iter().map(|p| &p.file)) {
                parts.push(file_sha(&dir.join(f))?);
            }
            let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
            (stage_fingerprint(&refs), Some((dir.clone(), index)))
        }
        IngestSource::Live { congresses } => {
            let list = json_string(congresses);
            (stage_fingerprint(&["ingest", TOOL_VERSION, "live", &list]), None)
        }
    };
    run_stage(wd, "ingest", fingerprint, force, || {
        let mut entries = Vec::new();
        let (mode, client): (FetchMode, Option<WikipediaClient>) = match (&plan, source) {
            (Some((dir, index)), _) => {
                for r in &index.rosters {
                    let html = std::fs::read_to_string(dir.join(&r.file))?;
                    let page = html_page(&format!("{}{} United States Congress", r.congress, ordinal_suffix(r.congress)), html, PageSource::Fixture);
                    entries.extend(parse_roster(&page, CongressTerm::new(r.congress)?)?);
                }
                // Fixture pages always overwrite the cache so edits to them take effect.
                for p in &index.pages {
                    let html = std::fs::read_to_string(dir.join(&p.file))?;
                    cache.put(&html_page(&p.title, html, PageSource::Fixture))?;
                }
                (FetchMode::CacheOnly, None)
            }
            (None, IngestSource::Live { congresses }) => {
                let client = WikipediaClient::english()?;
                for &c in congresses {
                    let term = CongressTerm::new(c)?;
                    let title = format!("{c}{} United States Congress", ordinal_suffix(c));
                    let page = fetch_page(&title, &cache, FetchMode::LiveThenCache, Some(&client as &dyn LiveSource))?;
                    entries.extend(parse_roster(&page, term)?);
                }
                (FetchMode::LiveThenCache, Some(client))
            }
            (None, IngestSource::Fixture(_)) => unreachable!("fixture plan is always built"),
        };
        let titles: Vec<String> = entries.iter().map(canonical_title).collect::<BTreeSet<_>>().into_iter().collect();
        let live = client.as_ref().map(|c| c as &dyn LiveSource);
        let fetched = fetch_many(&titles, &cache, mode, live, &FetchOptions::default());
        let mut pages = HashMap::new();
        let mut fetch_errors = Vec::new();
        for (title, r) in titles.iter().zip(fetched) {
            match r.and_then(|page| parse_sections(&page)) {
                Ok(sections) => {
                    pages.insert(title.clone(), sections);
                }
                Err(e) => fetch_errors.push((title.clone(), e.to_string())),
            }
        }
        let outcome = merge_identities(&entries, &pages, &PhaseTable::default());
        save_corpus(&outcome.politicians, &wd.raw_corpus())?;
        let report = IngestReport {
            roster_entries: entries.len(),
            politicians: outcome.politicians.len(),
            gaps: outcome.gaps,
            party_conflicts: outcome.party_conflicts,
            fetch_errors,
        };
        save_json(&report, &wd.report("ingest.json"))?;
        let summary = format!(
            "{} politicians from {} roster rows ({} gaps, {} party conflicts)",
            report.politicians,
            report.roster_entries,
            report.gaps.len(),
            report.party_conflicts.len()
        );
        Ok((vec![wd.raw_corpus(), wd.report("ingest.json")], summary))
    })
}

// -------------------------------------------------------------- annotate

#[derive(Debug, Clone, Default)]
pub struct AnnotateOptions {
    pub rules: Option<PathBuf>,
    pub strict: bool,
}

pub fn annotate(wd: &Workdir, opts: &AnnotateOptions, force: bool) -> Result<StageOutcome> {
    wd.require(&wd.raw_corpus(), "ingest")?;
    let rules = match &opts.rules {
        Some(p) => RuleSet::load(p, opts.strict)?,
        None => RuleSet::default_rules(opts.strict),
    };
    let fp = stage_fingerprint(&["annotate", TOOL_VERSION, &rules.to_json(), &opts.strict.to_string(), &file_sha(&wd.raw_corpus())?]);
    run_stage(wd, "annotate", fp, force, || {
        let mut corpus = load_corpus(&wd.raw_corpus())?;
        let mut report = AnnotationReport::default();
        for p in &mut corpus {
            let (bundle, r) = merge_categories(&p.sections, &rules);
            p.categories = Some(bundle);
            p.clean = None;
            report.absorb(&r);
        }
        save_corpus(&corpus, &wd.annotated_corpus())?;
        save_json(&report, &wd.report("annotate.json"))?;
        let summary = format!(
            "{} politicians, {} headings ({} mapped, {} unmapped)",
            corpus.len(),
            report.total_headings,
            report.mapped,
            report.unmapped_total()
        );
        Ok((vec![wd.annotated_corpus(), wd.report("annotate.json")], summary))
    })
}

// ----------------------------------------------------------------- clean

#[derive(Debug, Clone, Default)]
pub struct CleanOptions {
    pub policy: Option<PathBuf>,
    /// Precomputed entity spans; the rule-based tagger is used otherwise.
    pub entities: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CleanReport {
    pub policy_id: String,
    pub tagger: String,
    pub politicians: usize,
    pub audit: Vec<AuditIssue>,
}

fn dir_digest(dir: &Path) -> Result<String> {
    let mut parts = Vec::new();
    for name in ["loc.txt", "person_given.txt", "org_suffix.txt"] {
        parts.push(file_sha(&dir.join(name))?);
    }
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    Ok(stage_fingerprint(&refs))
}

pub fn clean(wd: &Workdir, opts: &CleanOptions, force: bool) -> Result<StageOutcome> {
    wd.require(&wd.annotated_corpus(), "annotate")?;
    let policy: CleanPolicy = match &opts.policy {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing policy {}", p.display()))?,
        None => CleanPolicy::default(),
    };
    let compiled = policy.compile()?;
    let gazetteer = match &opts.gazetteer {
        Some(dir) => Gazetteer::load_dir(dir)?,
        None => Gazetteer::shipped(),
    };
    let tagger_id = match (&opts.entities, &opts.gazetteer) {
        (Some(p), _) => format!("external:{}", file_sha(p)?),
        (None, Some(dir)) => format!("rules:{}", dir_digest(dir)?),
        (None, None) => "rules:shipped".to_string(),
    };
    let fp = stage_fingerprint(&["clean", TOOL_VERSION, &json_string(&policy), &tagger_id, &file_sha(&wd.annotated_corpus())?]);
    run_stage(wd, "clean", fp, force, || {
        let tagger: Box<dyn EntityTagger> = match &opts.entities {
            Some(p) => Box::new(ExternalFileTagger::load(p)?),
            None => Box::new(RuleBasedTagger::new(gazetteer.clone())),
        };
        let mut corpus = load_corpus(&wd.annotated_corpus())?;
        clean_corpus(&mut corpus, tagger.as_ref(), &compiled)?;
        let audit: Vec<AuditIssue> = corpus
            .iter()
            .flat_map(|p| compiled.audit(&p.id, p.clean.as_ref().expect("cleaned above"), &gazetteer))
            .collect();
        save_corpus(&corpus, &wd.clean_corpus())?;
        let report = CleanReport { policy_id: compiled.policy_id().to_string(), tagger: tagger_id.clone(), politicians: corpus.len(), audit };
        save_json(&report, &wd.report("clean.json"))?;
        let summary =
            format!("{} politicians cleaned with policy {} ({} audit issues)", corpus.len(), report.policy_id, report.audit.len());
        Ok((vec![wd.clean_corpus(), wd.report("clean.json")], summary))
    })
}

// ----------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Candidate vectors over the Political and Background text.
    pub doc2vec: D2VConfig,
    /// Word vectors per party and phase over the Political text.
    pub word2vec: W2VConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let doc2vec = D2VConfig {
            base: W2VConfig { dim: 64, epochs: 40, min_count: 2, subsample: 1e-3, ..W2VConfig::default() },
            ..D2VConfig::default()
        };
        let word2vec = W2VConfig { dim: 50, epochs: 30, min_count: 2, subsample: 1e-3, ..W2VConfig::default() };
        TrainConfig { doc2vec, word2vec }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub workers: Option<usize>,
}

impl TrainOptions {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
                .with_context(|| format!("parsing train config {}", p.display()))?,
            None => TrainConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.doc2vec.base.seed = s;
            cfg.word2vec.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.doc2vec.base.epochs = e;
            cfg.word2vec.epochs = e;
        }
        if let Some(w) = self.workers {
            cfg.doc2vec.base.workers = w;
            cfg.word2vec.workers = w;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WordModelSummary {
    pub party: PartyKind,
    pub phase: Option<u8>,
    pub sentences: usize,
    pub vocab: usize,
    pub skipped: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config: TrainConfig,
    pub doc2vec: BTreeMap<String, polariscope::embed::TrainReport>,
    pub words: Vec<WordModelSummary>,
}

/// Sentences of a politician's cleaned Political text, tokenized.
fn political_sentences(p: &Politician) -> Vec<Vec<String>> {
    let Some(c) = &p.clean else { return Vec::new() };
    c.political.split(['.', '!', '?', '\n', ';']).map(tokenize).filter(|t| !t.is_empty()).collect()
}

fn load_clean(wd: &Workdir) -> Result<Vec<Politician>> {
    wd.require(&wd.clean_corpus(), "clean")?;
    let corpus = load_corpus(&wd.clean_corpus())?;
    if let Some(p) = corpus.iter().find(|p| p.clean.is_none()) {
        bail!("{} has no cleaned text; run `polariscope clean` first", p.id);
    }
    Ok(corpus)
}

fn category_of(kind: DatasetKind) -> Category {
    match kind {
        DatasetKind::Background => Category::Background,
        DatasetKind::Political => Category::Political,
        _ => Category::Other,
    }
}

pub fn train(wd: &Workdir, opts: &TrainOptions, force: bool) -> Result<StageOutcome> {
    let cfg = opts.resolve()?;
    let corpus = load_clean(wd)?;
    let fp = stage_fingerprint(&["train", TOOL_VERSION, &json_string(&cfg), &file_sha(&wd.clean_corpus())?]);
    run_stage(wd, "train", fp, force, || {
        let mut outputs = Vec::new();
        let mut reports = BTreeMap::new();
        for kind in CANDIDATE_KINDS {
            let docs: Vec<(String, Vec<String>)> = corpus
                .iter()
                .map(|p| (p.id.clone(), tokenize(p.clean.as_ref().expect("checked on load").get(category_of(kind)))))
                .collect();
            let model = train_doc2vec(&docs, &cfg.doc2vec, kind).with_context(|| format!("training {} document vectors", kind.as_str()))?;
            let path = wd.embeddings(kind, Source::D2v);
            save_embeddings(&model.to_embedding_set(), &path)?;
            reports.insert(kind.as_str().to_string(), model.report.clone());
            outputs.push(path);
        }

        let words_dir = wd.words_dir();
        if words_dir.exists() {
            std::fs::remove_dir_all(&words_dir)?;
        }
        let mut words = Vec::new();
        let table = PhaseTable::default();
        for party in [PartyKind::Democratic, PartyKind::Republican] {
            let phases = std::iter::once(None).chain(table.phases().iter().map(|ph| Some(ph.index)));
            for phase in phases {
                let sentences: Vec<Vec<String>> = corpus
                    .iter()
                    .filter(|p| p.party.kind == party && phase.is_none_or(|ph| p.phases.contains(&ph)))
                    .flat_map(political_sentences)
                    .collect();
                let mut summary = WordModelSummary { party, phase, sentences: sentences.len(), vocab: 0, skipped: None };
                if sentences.is_empty() {
                    summary.skipped = Some("no text".into());
                    words.push(summary);
                    continue;
                }
                match train_word2vec(&sentences, &cfg.word2vec) {
                    Ok(model) => {
                        let set = model.to_embedding_set(DatasetKind::Political);
                        summary.vocab = set.len();
                        let path = wd.words(party, phase);
                        save_embeddings(&set, &path)?;
                        outputs.push(path);
                    }
                    Err(EmbedError::EmptyVocab) => summary.skipped = Some("empty vocabulary at min_count".into()),
                    Err(e) => return Err(e.into()),
                }
                words.push(summary);
            }
        }
        let trained = words.iter().filter(|w| w.skipped.is_none()).count();
        save_json(&TrainSummary { config: cfg.clone(), doc2vec: reports, words }, &wd.report("train.json"))?;
        outputs.push(wd.report("train.json"));
        Ok((outputs, format!("document vectors for {} politicians, {trained} word models", corpus.len())))
    })
}

// ------------------------------------------------------------ embed-load

#[derive(Debug, Clone, Default)]
pub struct EmbedLoadOptions {
    pub manifests: Vec<PathBuf>,
    pub attention: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoadedSet {
    pub dataset_kind: DatasetKind,
    pub manifest: PathBuf,
    pub vectors: usize,
    /// Ids in the file that are not in the corpus; dropped.
    pub orphans: Vec<String>,
    /// Corpus ids with no vector.
    pub missing: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedLoadReport {
    pub sets: Vec<LoadedSet>,
    pub attention_records: Option<usize>,
    pub attention_orphans: Vec<String>,
}

fn manifest_data_path(manifest_path: &Path) -> Result<PathBuf> {
    let m: ExternalManifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)
        .with_context(|| format!("parsing manifest {}", manifest_path.display()))?;
    Ok(if m.file.is_absolute() { m.file } else { manifest_path.parent().unwrap_or(Path::new(".")).join(m.file) })
}

pub fn embed_load(wd: &Workdir, opts: &EmbedLoadOptions, force: bool) -> Result<StageOutcome> {
    if opts.manifests.is_empty() && opts.attention.is_none() {
        bail!("nothing to load; pass --manifest and/or --attention");
    }
    let corpus = load_clean(wd)?;
    let mut parts = vec!["embed-load".to_string(), TOOL_VERSION.to_string(), file_sha(&wd.clean_corpus())?];
    for m in &opts.manifests {
        parts.push(file_sha(m)?);
        parts.push(file_sha(&manifest_data_path(m)?)?);
    }
    if let Some(a) = &opts.attention {
        parts.push(format!("attention:{}", file_sha(a)?));
    }
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    let fp = stage_fingerprint(&refs);
    run_stage(wd, "embed-load", fp, force, || {
        let ids: HashSet<String> = corpus.iter().map(|p| p.id.clone()).collect();
        let mut outputs = Vec::new();
        let mut sets = Vec::new();
        let mut seen = BTreeSet::new();
        for m in &opts.manifests {
            let load = load_external_embeddings(m, Some(&ids)).with_context(|| format!("loading {}", m.display()))?;
            let kind = load.manifest.dataset_kind;
            if !CANDIDATE_KINDS.contains(&kind) {
                bail!("{}: dataset_kind must be political or background, got {}", m.display(), kind.as_str());
            }
            if !seen.insert(kind) {
                bail!("two manifests for the {} dataset", kind.as_str());
            }
            let mut set = load.set.filter(|id| ids.contains(id));
            set.normalize().with_context(|| format!("normalizing {}", m.display()))?;
            let mut missing: Vec<String> = ids.iter().filter(|id| set.position(id).is_none()).cloned().collect();
            missing.sort();
            let path = wd.embeddings(kind, Source::External);
            save_embeddings(&set, &path)?;
            outputs.push(path);
            sets.push(LoadedSet { dataset_kind: kind, manifest: m.clone(), vectors: set.len(), orphans: load.orphans, missing });
        }
        // External sets not named in this run are stale.
        for kind in CANDIDATE_KINDS {
            let path = wd.embeddings(kind, Source::External);
            if !seen.contains(&kind) && path.exists() {
                std::fs::remove_file(&path)?;
            }
        }
        let mut attention_records = None;
        let mut attention_orphans = Vec::new();
        match &opts.attention {
            Some(a) => {
                let records = load_attention_scores(a).with_context(|| format!("loading {}", a.display()))?;
                let (kept, dropped): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| ids.contains(&r.id));
                attention_orphans = dropped.into_iter().map(|r| r.id).collect();
                let mut body = String::new();
                for r in &kept {
                    body.push_str(&serde_json::to_string(r)?);
                    body.push('\n');
                }
                write_with_checksum(&wd.attention(), body.as_bytes())?;
                attention_records = Some(kept.len());
                outputs.push(wd.attention());
            }
            None => {
                if wd.attention().exists() {
                    std::fs::remove_file(wd.attention())?;
                }
            }
        }
        let summary = format!(
            "{} external sets ({}), attention records: {}",
            sets.len(),
            sets.iter().map(|s| format!("{} x{}", s.dataset_kind.as_str(), s.vectors)).collect::<Vec<_>>().join(", "),
            attention_records.map_or("none".to_string(), |n| n.to_string())
        );
        save_json(&EmbedLoadReport { sets, attention_records, attention_orphans }, &wd.report("embed-load.json"))?;
        outputs.push(wd.report("embed-load.json"));
        Ok((outputs, summary))
    })
}

// ----------------------------------------------------------------- index

/// Candidate embedding files present in the working directory.
pub fn available_sets(wd: &Workdir) -> Vec<(DatasetKind, Source)> {
    let mut out = Vec::new();
    for src in Source::ALL {
        for kind in CANDIDATE_KINDS {
            if wd.embeddings(kind, src).exists() {
                out.push((kind, src));
            }
        }
    }
    out
}

pub fn index(wd: &Workdir, params: AnnParams, force: bool) -> Result<StageOutcome> {
    let sets = available_sets(wd);
    if !sets.iter().any(|(_, s)| *s == Source::D2v) {
        wd.require(&wd.embeddings(DatasetKind::Political, Source::D2v), "train")?;
    }
    let mut parts = vec!["index".to_string(), TOOL_VERSION.to_string(), json_string(&params)];
    for (kind, src) in &sets {
        parts.push(format!("{}.{}:{}", kind.as_str(), src.as_str(), file_sha(&wd.embeddings(*kind, *src))?));
    }
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    run_stage(wd, "index", stage_fingerprint(&refs), force, || {
        let mut outputs = Vec::new();
        for src in Source::ALL {
            for kind in CANDIDATE_KINDS {
                let path = wd.index(kind, src);
                if !sets.contains(&(kind, src)) && path.exists() {
                    std::fs::remove_file(&path)?;
                }
            }
        }
        for (kind, src) in &sets {
            let set = load_embeddings(&wd.embeddings(*kind, *src), *kind, src.provenance())?;
            let index = AnnIndex::build(set, params)?;
            let path = wd.index(*kind, *src);
            save_index(&index, &path)?;
            outputs.push(path);
        }
        Ok((outputs.clone(), format!("{} indexes built", outputs.len())))
    })
}

// -------------------------------------------------------------- classify

#[derive(Debug, Clone, Default)]
pub struct ClassifyOptions {
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: String,
    pub embedding: Source,
    pub dataset: DatasetKind,
    /// `None` when the embedding set has not been produced.
    pub accuracy: Option<f64>,
    pub report: Option<EvalReport>,
}

pub fn parties_of(corpus: &[Politician]) -> HashMap<String, Party> {
    corpus.iter().map(|p| (p.id.clone(), p.party.clone())).collect()
}

pub fn accuracy_table(rows: &[AccuracyRow]) -> String {
    let mut out = format!("{:<8} {:<10} {:<11} {}\n", "Model", "Embedding", "Data", "Accuracy");
    for r in rows {
        let acc = r.accuracy.map_or("n/a".to_string(), |a| format!("{:.3}", 100.0 * a));
        out.push_str(&format!("{:<8} {:<10} {:<11} {}\n", r.model, r.embedding.label(), kind_label(r.dataset), acc));
    }
    out
}

pub fn classify(wd: &Workdir, opts: &ClassifyOptions, force: bool) -> Result<StageOutcome> {
    let corpus = load_clean(wd)?;
    let mut svm = SvmConfig::default();
    if let Some(l) = opts.lambda {
        svm.lambda = l;
    }
    if let Some(s) = opts.seed {
        svm.seed = s;
    }
    let sets = available_sets(wd);
    if !sets.iter().any(|(_, s)| *s == Source::D2v) {
        wd.require(&wd.embeddings(DatasetKind::Political, Source::D2v), "train")?;
    }
    let split = SplitConfig::default();
    let kmeans = KMeansConfig::default();
    let mut parts = vec![
        "classify".to_string(),
        TOOL_VERSION.to_string(),
        json_string(&svm),
        json_string(&split),
        json_string(&kmeans),
        file_sha(&wd.clean_corpus())?,
    ];
    for (kind, src) in &sets {
        parts.push(format!("{}.{}:{}", kind.as_str(), src.as_str(), file_sha(&wd.embeddings(*kind, *src))?));
    }
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    run_stage(wd, "classify", stage_fingerprint(&refs), force, || {
        let parties = parties_of(&corpus);
        let mut rows = Vec::new();
        for (model, is_svm) in [("SVM", true), ("K-means", false)] {
            for src in Source::ALL {
                for kind in CANDIDATE_KINDS {
                    let mut row = AccuracyRow { model: model.into(), embedding: src, dataset: kind, accuracy: None, report: None };
                    if sets.contains(&(kind, src)) {
                        let set = load_embeddings(&wd.embeddings(kind, src), kind, src.provenance())?;
                        let set = set.filter(|id| parties.contains_key(id));
                        let labeled = LabeledSet::from_set(&set, &parties)?;
                        let report = if is_svm {
                            train_and_evaluate(&labeled, &split, &svm)?
                        } else {
                            evaluate_kmeans(&labeled, &kmeans)?.0
                        };
                        row.accuracy = Some(report.accuracy);
                        row.report = Some(report);
                    }
                    rows.push(row);
                }
            }
        }
        save_json(&rows, &wd.report("classify.json"))?;
        let table = accuracy_table(&rows);
        write_with_checksum(&wd.report("classify.txt"), table.as_bytes())?;
        let filled = rows.iter().filter(|r| r.accuracy.is_some()).count();
        Ok((vec![wd.report("classify.json"), wd.report("classify.txt")], format!("{filled} of {} accuracy rows computed\n{table}", rows.len())))
    })
}

// -------------------------------------------------------------- polarize

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolarizeRun {
    pub dataset: DatasetKind,
    pub embedding: Source,
    pub k_requested: usize,
    /// `k` actually used: capped at the number of other major-party candidates.
    pub k: usize,
    pub scored: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortReport {
    pub dataset: DatasetKind,
    pub embedding: Source,
    pub k: usize,
    pub by_party: Vec<polariscope::polarize::CohortRow>,
    pub by_phase: Vec<polariscope::polarize::CohortRow>,
}

pub fn party_kinds(corpus: &[Politician]) -> HashMap<String, PartyKind> {
    corpus.iter().map(|p| (p.id.clone(), p.party.kind)).collect()
}

pub fn effective_k(k: usize, set_ids: &[String], parties: &HashMap<String, PartyKind>) -> usize {
    let majors = set_ids.iter().filter(|id| parties.get(*id).is_some_and(|p| *p != PartyKind::Other)).count();
    k.min(majors.saturating_sub(1))
}

fn run_name(kind: DatasetKind, src: Source) -> String {
    format!("{}.{}", kind.as_str(), src.as_str())
}

pub fn polarize(wd: &Workdir, k: Option<usize>, force: bool) -> Result<StageOutcome> {
    let k = k.unwrap_or(DEFAULT_K);
    if k == 0 {
        bail!("--k must be at least 1");
    }
    let corpus = load_clean(wd)?;
    let runs: Vec<(DatasetKind, Source)> = available_sets(wd).into_iter().filter(|(kind, src)| wd.index(*kind, *src).exists()).collect();
    if runs.is_empty() {
        wd.require(&wd.index(DatasetKind::Political, Source::D2v), "index")?;
    }
    let mut parts = vec!["polarize".to_string(), TOOL_VERSION.to_string(), k.to_string(), file_sha(&wd.clean_corpus())?];
    for (kind, src) in &runs {
        parts.push(format!("{}:{}", run_name(*kind, *src), file_sha(&wd.index(*kind, *src))?));
        parts.push(file_sha(&wd.embeddings(*kind, *src))?);
    }
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    run_stage(wd, "polarize", stage_fingerprint(&refs), force, || {
        let parties = party_kinds(&corpus);
        let phases: HashMap<String, BTreeSet<u8>> = corpus.iter().map(|p| (p.id.clone(), p.phases.clone())).collect();
        let mut outputs = Vec::new();
        let mut summary = Vec::new();
        for (kind, src) in &runs {
            let set = load_embeddings(&wd.embeddings(*kind, *src), *kind, src.provenance())?;
            let index = load_index(&wd.index(*kind, *src), set)?;
            let k_eff = effective_k(k, index.set().ids(), &parties);
            let name = run_name(*kind, *src);
            let scores = if k_eff == 0 { Vec::new() } else { polarize_all(&index, k_eff, &parties)? };
            let json = wd.report(&format!("polarization.{name}.json"));
            save_json(&scores, &json)?;
            let csv = wd.report(&format!("polarization.{name}.csv"));
            write_with_checksum(&csv, scores_to_csv(&scores).as_bytes())?;
            outputs.extend([json, csv]);
            if !scores.is_empty() {
                let cohort = CohortReport {
                    dataset: *kind,
                    embedding: *src,
                    k: k_eff,
                    by_party: cohort_summary(&scores, GroupBy::Party, &phases)?,
                    by_phase: cohort_summary(&scores, GroupBy::Phase, &phases)?,
                };
                let cj = wd.report(&format!("cohort.{name}.json"));
                save_json(&cohort, &cj)?;
                let mut rows = cohort.by_party.clone();
                rows.extend(cohort.by_phase.iter().filter(|r| r.group != "all").cloned());
                let cc = wd.report(&format!("cohort.{name}.csv"));
                write_with_checksum(&cc, cohort_to_csv(&rows).as_bytes())?;
                outputs.extend([cj, cc]);
            }
            summary.push(PolarizeRun { dataset: *kind, embedding: *src, k_requested: k, k: k_eff, scored: scores.len() });
        }
        let line = summary.iter().map(|r| format!("{}.{} k={} n={}", r.dataset.as_str(), r.embedding.as_str(), r.k, r.scored)).collect::<Vec<_>>();
        save_json(&summary, &wd.report("polarize.json"))?;
        outputs.push(wd.report("polarize.json"));
        Ok((outputs, line.join(", ")))
    })
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub claim: String,
    /// `None` when one side of the comparison is missing.
    pub holds: Option<bool>,
}

fn accuracy_of(rows: &[AccuracyRow], model: &str, src: Source, kind: DatasetKind) -> Option<f64> {
    rows.iter().find(|r| r.model == model && r.embedding == src && r.dataset == kind).and_then(|r| r.accuracy)
}

/// The orderings the accuracy table is expected to show on the full corpus.
pub fn ordering_checks(rows: &[AccuracyRow]) -> Vec<OrderingCheck> {
    let cmp = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a > b);
    let d2v = Source::D2v;
    let mut out = vec![OrderingCheck {
        claim: "SVM(Political) > SVM(Background) on Doc2Vec".into(),
        holds: cmp(accuracy_of(rows, "SVM", d2v, DatasetKind::Political), accuracy_of(rows, "SVM", d2v, DatasetKind::Background)),
    }];
    for kind in CANDIDATE_KINDS {
        out.push(OrderingCheck {
            claim: format!("SVM > K-means on Doc2Vec {}", kind_label(kind)),
            holds: cmp(accuracy_of(rows, "SVM", d2v, kind), accuracy_of(rows, "K-means", d2v, kind)),
        });
    }
    out
}

pub fn render_report(wd: &Workdir) -> Result<String> {
    wd.require(&wd.report("classify.json"), "classify")?;
    let rows: Vec<AccuracyRow> = load_json(&wd.report("classify.json"))?;
    let mut out = String::from("Classification accuracy (%)\n");
    out.push_str(&accuracy_table(&rows));
    out.push_str("\nOrdering checks\n");
    for c in ordering_checks(&rows) {
        let verdict = match c.holds {
            Some(true) => "yes",
            Some(false) => "no",
            None => "n/a",
        };
        out.push_str(&format!("  {:<45} {verdict}\n", c.claim));
    }
    let polar = wd.report("polarize.json");
    if polar.exists() {
        let runs: Vec<PolarizeRun> = load_json(&polar)?;
        for r in runs {
            let path = wd.report(&format!("cohort.{}.json", run_name(r.dataset, r.embedding)));
            if !path.exists() {
                continue;
            }
            let cohort: CohortReport = load_json(&path)?;
            out.push_str(&format!("\nSame-party neighbor ratio, {} {} (k={}, baseline 0.5)\n", r.embedding.label(), kind_label(r.dataset), cohort.k));
            for row in cohort.by_party.iter().chain(cohort.by_phase.iter().filter(|r| r.group != "all")) {
                let hist = row.histogram.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ");
                out.push_str(&format!("  {:<11} n={:<5} mean={:.3}  [{hist}]\n", row.group, row.count, row.mean_ratio));
            }
        }
    } else {
        out.push_str("\nNo polarization scores; run `polariscope polarize`.\n");
    }
    Ok(out)
}

pub fn report(wd: &Workdir, force: bool) -> Result<(StageOutcome, String)> {
    let text = render_report(wd)?;
    let fp = stage_fingerprint(&["report", TOOL_VERSION, &sha256_hex(text.as_bytes())]);
    let outcome = run_stage(wd, "report", fp, force, || {
        write_with_checksum(&wd.report("report.txt"), text.as_bytes())?;
        Ok((vec![wd.report("report.txt")], "report written".into()))
    })?;
    Ok((outcome, text))
}
