//! Read-only JSON API over a loaded snapshot.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use polariscope::ann::AnnIndex;
use polariscope::corpus::{congress_years, CongressTerm, PartyKind, Politician};
use polariscope::embed::DatasetKind;
use polariscope::polarize::{
    attention_top_words, candidate_polarization, eligible_neighbors, era_drift, is_special_token, word_neighbors, CorpusTag,
    PolarizationScore, PolarizeError, ScoredToken, DEFAULT_K, DEFAULT_PERCENTILE, DEFAULT_WORD_K,
};
use polariscope::store::TOOL_VERSION;
use serde::Serialize;
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::snapshot::Snapshot;
use crate::workdir::{party_slug, Source};

/// Largest `k` any endpoint accepts.
pub const MAX_K: usize = 1000;
/// Row cap for the politician listing.
pub const LIST_CAP: usize = 500;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unknown_id(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_id", format!("no politician with id {id:?}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": {"code": self.code, "message": self.message}}))).into_response()
    }
}

impl From<PolarizeError> for ApiError {
    fn from(e: PolarizeError) -> Self {
        let msg = e.to_string();
        match e {
            PolarizeError::InsufficientPopulation { .. } => Self::new(StatusCode::CONFLICT, "insufficient_population", msg),
            PolarizeError::NotMajorParty(_) => Self::new(StatusCode::CONFLICT, "not_major_party", msg),
            PolarizeError::UnknownId(id) => Self::unknown_id(&id),
            PolarizeError::OutOfVocabulary(_) => Self::new(StatusCode::NOT_FOUND, "out_of_vocabulary", msg),
            PolarizeError::ZeroK | PolarizeError::Percentile(_) => Self::bad_request(msg),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", msg),
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Params = Result<Query<BTreeMap<String, String>>, QueryRejection>;

struct Q(BTreeMap<String, String>);

impl Q {
    fn from(p: Params) -> Result<Q, ApiError> {
        p.map(|Query(m)| Q(m)).map_err(|e| ApiError::bad_request(e.body_text()))
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str).filter(|s| !s.is_empty())
    }

    fn k(&self, name: &str, default: usize) -> Result<usize, ApiError> {
        match self.get(name) {
            None => Ok(default),
            Some(s) => match s.parse::<usize>() {
                Ok(k) if (1..=MAX_K).contains(&k) => Ok(k),
                _ => Err(ApiError::bad_request(format!("{name} must be an integer in 1..={MAX_K}, got {s:?}"))),
            },
        }
    }

    fn phase(&self, snap: &Snapshot) -> Result<Option<u8>, ApiError> {
        let Some(s) = self.get("phase") else { return Ok(None) };
        match s.parse::<u8>() {
            Ok(p) if snap.phases.get(p).is_some() => Ok(Some(p)),
            _ => Err(ApiError::bad_request(format!("phase must be one of 1..={}, got {s:?}", snap.phases.phases().len()))),
        }
    }

    fn dataset(&self) -> Result<DatasetKind, ApiError> {
        match self.get("dataset").unwrap_or("political") {
            "political" => Ok(DatasetKind::Political),
            "background" => Ok(DatasetKind::Background),
            other => Err(ApiError::bad_request(format!("dataset must be political or background, got {other:?}"))),
        }
    }

    fn provenance(&self) -> Result<Source, ApiError> {
        let s = self.get("provenance").unwrap_or("d2v");
        Source::parse(s).ok_or_else(|| ApiError::bad_request(format!("provenance must be d2v or external, got {s:?}")))
    }
}

fn parse_party(s: &str) -> Option<PartyKind> {
    match s.to_ascii_lowercase().as_str() {
        "d" | "dem" | "democratic" | "democrat" => Some(PartyKind::Democratic),
        "r" | "rep" | "republican" => Some(PartyKind::Republican),
        "other" => Some(PartyKind::Other),
        _ => None,
    }
}

fn major_party(q: &Q) -> Result<PartyKind, ApiError> {
    let s = q.get("party").ok_or_else(|| ApiError::bad_request("party is required (dem or rep)"))?;
    match parse_party(s) {
        Some(p @ (PartyKind::Democratic | PartyKind::Republican)) => Ok(p),
        _ => Err(ApiError::bad_request(format!("party must be dem or rep, got {s:?}"))),
    }
}

#[derive(Serialize)]
struct PoliticianSummary<'a> {
    id: &'a str,
    display_name: &'a str,
    party: PartyKind,
    party_label: String,
    chamber: polariscope::corpus::Chamber,
    terms: Vec<u32>,
    phases: Vec<u8>,
}

fn summary(p: &Politician) -> PoliticianSummary<'_> {
    PoliticianSummary {
        id: &p.id,
        display_name: &p.display_name,
        party: p.party.kind,
        party_label: p.party.to_string(),
        chamber: p.chamber,
        terms: p.terms.iter().map(|t| t.ordinal()).collect(),
        phases: p.phases.iter().copied().collect(),
    }
}

#[derive(Serialize)]
struct PoliticianList<'a> {
    total: usize,
    returned: usize,
    politicians: Vec<PoliticianSummary<'a>>,
}

async fn list_politicians(State(snap): State<Arc<Snapshot>>, params: Params) -> Response {
    let q = match Q::from(params) {
        Ok(q) => q,
        Err(e) => return e.into_response(),
    };
    let party = match q.get("party") {
        None => None,
        Some(s) => match parse_party(s) {
            Some(p) => Some(p),
            None => return ApiError::bad_request(format!("party must be dem, rep or other, got {s:?}")).into_response(),
        },
    };
    let phase = match q.phase(&snap) {
        Ok(p) => p,
        Err(e) => return e.into_response(),
    };
    let needle = q.get("q").map(str::to_lowercase);
    let mut hits: Vec<&Politician> = snap
        .corpus
        .iter()
        .filter(|p| party.is_none_or(|k| p.party.kind == k))
        .filter(|p| phase.is_none_or(|ph| p.phases.contains(&ph)))
        .filter(|p| needle.as_ref().is_none_or(|n| p.display_name.to_lowercase().contains(n.as_str()) || p.id.contains(n.as_str())))
        .collect();
    hits.sort_by(|a, b| a.display_name.cmp(&b.display_name).then_with(|| a.id.cmp(&b.id)));
    let total = hits.len();
    let politicians: Vec<_> = hits.into_iter().take(LIST_CAP).map(summary).collect();
    Json(PoliticianList { total, returned: politicians.len(), politicians }).into_response()
}

async fn get_politician(State(snap): State<Arc<Snapshot>>, Path(id): Path<String>) -> Response {
    let Some(p) = snap.politician(&id) else { return ApiError::unknown_id(&id).into_response() };
    let datasets: Vec<serde_json::Value> = snap
        .datasets()
        .filter(|(kind, src)| snap.index(*kind, *src).is_some_and(|ix| ix.set().position(&id).is_some()))
        .map(|(kind, src)| json!({"dataset": kind.as_str(), "provenance": src.as_str()}))
        .collect();
    let clean = p.clean.as_ref().map(|c| json!({"background": c.background, "political": c.political, "other": c.other}));
    let has_attention = snap.attention.as_ref().is_some_and(|a| a.contains_key(&id));
    let body = json!({
        "politician": summary(p),
        "headings": p.sections.headings().collect::<Vec<_>>(),
        "clean": clean,
        "datasets": datasets,
        "attention": has_attention,
    });
    Json(body).into_response()
}

fn candidate_index<'a>(snap: &'a Snapshot, id: &str, kind: DatasetKind, src: Source) -> Result<&'a AnnIndex, ApiError> {
    if snap.politician(id).is_none() {
        return Err(ApiError::unknown_id(id));
    }
    let index = snap.index(kind, src).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "dataset_unavailable",
            format!("no {} {} vectors in this snapshot", kind.as_str(), src.as_str()),
        )
    })?;
    if index.set().position(id).is_none() {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "not_in_dataset",
            format!("{id:?} has no {} {} vector", kind.as_str(), src.as_str()),
        ));
    }
    Ok(index)
}

#[derive(Serialize)]
struct NeighborOut {
    rank: usize,
    id: String,
    display_name: String,
    party: PartyKind,
    score: f64,
}

#[derive(Serialize)]
struct NeighborsResponse {
    id: String,
    dataset: DatasetKind,
    provenance: Source,
    k: usize,
    neighbors: Vec<NeighborOut>,
}

async fn neighbors(State(snap): State<Arc<Snapshot>>, Path(id): Path<String>, params: Params) -> ApiResult<NeighborsResponse> {
    let q = Q::from(params)?;
    let (kind, src, k) = (q.dataset()?, q.provenance()?, q.k("k", DEFAULT_K)?);
    let index = candidate_index(&snap, &id, kind, src)?;
    let found = eligible_neighbors(index, &id, k, &snap.parties, None)?;
    let neighbors = found
        .into_iter()
        .map(|n| NeighborOut {
            display_name: snap.politician(&n.id).map(|p| p.display_name.clone()).unwrap_or_default(),
            rank: n.rank,
            id: n.id,
            party: n.party,
            score: n.score,
        })
        .collect();
    Ok(Json(NeighborsResponse { id, dataset: kind, provenance: src, k, neighbors }))
}

#[derive(Serialize)]
struct PolarizationResponse {
    provenance: Source,
    #[serde(flatten)]
    score: PolarizationScore,
}

async fn polarization(State(snap): State<Arc<Snapshot>>, Path(id): Path<String>, params: Params) -> ApiResult<PolarizationResponse> {
    let q = Q::from(params)?;
    let (kind, src, k) = (q.dataset()?, q.provenance()?, q.k("k", DEFAULT_K)?);
    let index = candidate_index(&snap, &id, kind, src)?;
    let score = candidate_polarization(index, &id, k, &snap.parties, None)?;
    Ok(Json(PolarizationResponse { provenance: src, score }))
}

fn word_model_missing(party: PartyKind, phase: Option<u8>) -> ApiError {
    let phase = phase.map_or("all phases".to_string(), |p| format!("phase {p}"));
    ApiError::new(StatusCode::NOT_FOUND, "model_unavailable", format!("no {} word model for {phase}", party_slug(party)))
}

async fn word_neighbors_handler(
    State(snap): State<Arc<Snapshot>>,
    Path(word): Path<String>,
    params: Params,
) -> ApiResult<polariscope::polarize::WordNeighborReport> {
    let q = Q::from(params)?;
    let party = major_party(&q)?;
    let phase = q.phase(&snap)?;
    let k = q.k("k", DEFAULT_WORD_K)?;
    let probes: Vec<String> = q.get("probe").map(|s| s.split(',').map(|p| p.trim().to_lowercase()).filter(|p| !p.is_empty()).collect()).unwrap_or_default();
    let probe_refs: Vec<&str> = probes.iter().map(String::as_str).collect();
    let set = snap.words.get(&(party, phase)).ok_or_else(|| word_model_missing(party, phase))?;
    Ok(Json(word_neighbors(set, CorpusTag { party, phase }, &word.to_lowercase(), &probe_refs, k)?))
}

async fn word_drift(State(snap): State<Arc<Snapshot>>, Path(word): Path<String>, params: Params) -> ApiResult<polariscope::polarize::EraDriftReport> {
    let q = Q::from(params)?;
    let party = major_party(&q)?;
    let k = q.k("k", DEFAULT_WORD_K)?;
    let models: BTreeMap<u8, _> =
        snap.words.iter().filter(|((p, ph), _)| *p == party && ph.is_some()).map(|((_, ph), set)| (ph.unwrap(), set.clone())).collect();
    if models.is_empty() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "model_unavailable", format!("no per-phase {} word models", party_slug(party))));
    }
    Ok(Json(era_drift(&models, &snap.phases, party, &word.to_lowercase(), k)?))
}

#[derive(Serialize)]
struct AttentionToken<'a> {
    position: usize,
    token: &'a str,
    score: f64,
    special: bool,
    selected: bool,
}

#[derive(Serialize)]
struct AttentionResponse<'a> {
    id: &'a str,
    percentile: f64,
    threshold: f64,
    tokens: Vec<AttentionToken<'a>>,
    top: Vec<ScoredToken>,
}

async fn attention(State(snap): State<Arc<Snapshot>>, Path(id): Path<String>, params: Params) -> Response {
    let result = (|| {
        let q = Q::from(params)?;
        let p = match q.get("percentile") {
            None => DEFAULT_PERCENTILE,
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|p| p.is_finite())
                .ok_or_else(|| ApiError::bad_request(format!("percentile must be a number in [0, 100], got {s:?}")))?,
        };
        if snap.politician(&id).is_none() {
            return Err(ApiError::unknown_id(&id));
        }
        let no_data = || ApiError::new(StatusCode::NOT_FOUND, "no_attention", "no attention data loaded for this snapshot");
        let record = snap.attention.as_ref().ok_or_else(no_data)?.get(&id).ok_or_else(|| {
            ApiError::new(StatusCode::NOT_FOUND, "no_attention", format!("no attention data for {id:?}"))
        })?;
        let top = attention_top_words(record, p)?;
        let tokens = record
            .tokens
            .iter()
            .zip(&record.scores)
            .enumerate()
            .map(|(i, (t, &s))| {
                let special = is_special_token(t);
                AttentionToken { position: i, token: t, score: s, special, selected: !special && s >= top.threshold }
            })
            .collect();
        let body = AttentionResponse { id: &id, percentile: top.percentile, threshold: top.threshold, tokens, top: top.tokens.clone() };
        Ok(Json(body).into_response())
    })();
    result.unwrap_or_else(|e: ApiError| e.into_response())
}

async fn meta(State(snap): State<Arc<Snapshot>>) -> Json<serde_json::Value> {
    let count = |k: PartyKind| snap.corpus.iter().filter(|p| p.party.kind == k).count();
    let phases: Vec<_> = snap
        .phases
        .phases()
        .iter()
        .map(|ph| {
            let from = congress_years(CongressTerm(ph.low)).map(|y| y.0).ok();
            let to = congress_years(CongressTerm(ph.high)).map(|y| y.1).ok();
            let n = snap.corpus.iter().filter(|p| p.phases.contains(&ph.index)).count();
            json!({"index": ph.index, "first_congress": ph.low, "last_congress": ph.high, "start_year": from, "end_year": to, "politicians": n})
        })
        .collect();
    let datasets: Vec<_> = snap
        .datasets()
        .map(|(kind, src)| {
            let ix = snap.index(kind, src).expect("listed");
            let scored = snap.scores.get(&(kind, src)).map(Vec::len);
            json!({"dataset": kind.as_str(), "provenance": src.as_str(), "vectors": ix.len(), "dim": ix.dim(), "precomputed_scores": scored})
        })
        .collect();
    let words: Vec<_> = snap
        .words
        .iter()
        .map(|((party, phase), set)| json!({"party": party_slug(*party), "phase": phase, "vocabulary": set.len()}))
        .collect();
    let stages: BTreeMap<&str, &str> = snap.manifest.stages.iter().map(|(k, v)| (k.as_str(), v.fingerprint.as_str())).collect();
    Json(json!({
        "tool_version": TOOL_VERSION,
        "politicians": {
            "total": snap.corpus.len(),
            "democratic": count(PartyKind::Democratic),
            "republican": count(PartyKind::Republican),
            "other": count(PartyKind::Other),
        },
        "phases": phases,
        "datasets": datasets,
        "provenances": snap.datasets().map(|(_, s)| s.as_str()).collect::<std::collections::BTreeSet<_>>(),
        "word_models": words,
        "attention_records": snap.attention.as_ref().map(HashMap::len),
        "defaults": {"k": DEFAULT_K, "word_k": DEFAULT_WORD_K, "percentile": DEFAULT_PERCENTILE},
        "stages": stages,
    }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(snapshot: Arc<Snapshot>, allow_origin: Option<HeaderValue>) -> Router {
    let mut app = Router::new()
        .route("/api/meta", get(meta))
        .route("/api/politicians", get(list_politicians))
        .route("/api/politicians/{id}", get(get_politician))
        .route("/api/neighbors/{id}", get(neighbors))
        .route("/api/polarization/{id}", get(polarization))
        .route("/api/words/{word}/neighbors", get(word_neighbors_handler))
        .route("/api/words/{word}/drift", get(word_drift))
        .route("/api/attention/{id}", get(attention))
        .fallback(not_found)
        .with_state(snapshot);
    if let Some(origin) = allow_origin {
        app = app.layer(CorsLayer::new().allow_origin(origin).allow_methods([Method::GET]));
    }
    app
}
