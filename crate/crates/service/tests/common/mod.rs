#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use polariscope::ann::AnnParams;
use polariscope_service::pipeline::{self, IngestSource, StageOutcome};
use polariscope_service::{api, Snapshot, Workdir};
use serde_json::Value;
use tower::ServiceExt;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Runs every stage on the bundled fixture corpus into `root`.
pub fn run_fixture_pipeline(root: &Path) -> anyhow::Result<Vec<StageOutcome>> {
    let wd = Workdir::new(root);
    let fx = fixtures();
    let load = pipeline::EmbedLoadOptions {
        manifests: vec![fx.join("external/political.manifest.json"), fx.join("external/background.manifest.json")],
        attention: Some(fx.join("attention.jsonl")),
    };
    Ok(vec![
        pipeline::ingest(&wd, &IngestSource::Fixture(fx.clone()), false)?,
        pipeline::annotate(&wd, &Default::default(), false)?,
        pipeline::clean(&wd, &Default::default(), false)?,
        pipeline::train(&wd, &Default::default(), false)?,
        pipeline::embed_load(&wd, &load, false)?,
        pipeline::index(&wd, AnnParams::default(), false)?,
        pipeline::classify(&wd, &Default::default(), false)?,
        pipeline::polarize(&wd, None, false)?,
        pipeline::report(&wd, false)?.0,
    ])
}

/// A finished fixture working directory, built once per test binary.
pub fn fixture_workdir() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let name = std::env::current_exe().unwrap().file_stem().unwrap().to_string_lossy().into_owned();
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("fixture-{name}"));
        let _ = std::fs::remove_dir_all(&dir);
        run_fixture_pipeline(&dir).expect("fixture pipeline");
        dir
    })
}

pub fn snapshot() -> Arc<Snapshot> {
    static SNAP: OnceLock<Arc<Snapshot>> = OnceLock::new();
    SNAP.get_or_init(|| Arc::new(Snapshot::load(fixture_workdir()).expect("snapshot loads"))).clone()
}

pub fn app() -> axum::Router {
    api::router(snapshot(), None)
}

pub async fn get_raw(app: axum::Router, uri: &str) -> (StatusCode, Vec<u8>) {
    let res = app.oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

pub async fn get(uri: &str) -> (StatusCode, Value) {
    let (status, body) = get_raw(app(), uri).await;
    let v = serde_json::from_slice(&body).unwrap_or_else(|e| panic!("{uri}: body is not JSON ({e})"));
    (status, v)
}

pub fn openapi() -> Value {
    serde_json::from_str(include_str!("../../openapi.json")).unwrap()
}

/// Validates `v` against a named schema from the shipped OpenAPI file.
pub fn check_schema(schema: &str, v: &Value) -> Result<(), String> {
    let doc = openapi();
    let root = serde_json::json!({
        "components": doc["components"],
        "$ref": format!("#/components/schemas/{schema}"),
    });
    let validator = jsonschema::validator_for(&root).map_err(|e| e.to_string())?;
    let errors: Vec<String> = validator.iter_errors(v).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(format!("{schema}: {}", errors.join("; ")))
    }
}

/// Successful requests on the fixture snapshot and the schema each answers with.
pub const OK_CASES: &[(&str, &str)] = &[
    ("/api/meta", "Meta"),
    ("/api/politicians", "PoliticianList"),
    ("/api/politicians?q=ha", "PoliticianList"),
    ("/api/politicians?party=rep&phase=2", "PoliticianList"),
    ("/api/politicians?party=other", "PoliticianList"),
    ("/api/politicians/walter-haskins", "PoliticianDetail"),
    ("/api/politicians/arthur-penrose", "PoliticianDetail"),
    ("/api/neighbors/walter-haskins?k=10", "NeighborsResponse"),
    ("/api/neighbors/walter-haskins?dataset=background&k=4&provenance=external", "NeighborsResponse"),
    ("/api/neighbors/arthur-penrose?k=3", "NeighborsResponse"),
    ("/api/polarization/margaret-ellison?k=10", "PolarizationResponse"),
    ("/api/polarization/walter-haskins?dataset=political&k=4&provenance=external", "PolarizationResponse"),
    ("/api/words/gun/neighbors?party=dem&k=15", "WordNeighborReport"),
    ("/api/words/gun/neighbors?party=rep&phase=2&k=5&probe=rights,violence,zzz", "WordNeighborReport"),
    ("/api/words/qqqq/neighbors?party=dem", "WordNeighborReport"),
    ("/api/words/gun/drift?party=rep&k=3", "EraDriftReport"),
    ("/api/attention/walter-haskins", "AttentionResponse"),
    ("/api/attention/walter-haskins?percentile=0", "AttentionResponse"),
    ("/api/attention/walter-haskins?percentile=100", "AttentionResponse"),
];

/// Failing requests with their expected status and error code.
pub const ERROR_CASES: &[(&str, u16, &str)] = &[
    ("/api/neighbors/walter-haskins?k=0", 400, "bad_request"),
    ("/api/neighbors/walter-haskins?k=abc", 400, "bad_request"),
    ("/api/neighbors/walter-haskins?k=1001", 400, "bad_request"),
    ("/api/neighbors/walter-haskins?dataset=whole", 400, "bad_request"),
    ("/api/neighbors/walter-haskins?provenance=bert", 400, "bad_request"),
    ("/api/polarization/walter-haskins?k=-1", 400, "bad_request"),
    ("/api/politicians?party=green", 400, "bad_request"),
    ("/api/politicians?phase=9", 400, "bad_request"),
    ("/api/words/gun/neighbors", 400, "bad_request"),
    ("/api/words/gun/neighbors?party=other", 400, "bad_request"),
    ("/api/words/gun/neighbors?party=dem&phase=0", 400, "bad_request"),
    ("/api/attention/walter-haskins?percentile=101", 400, "bad_request"),
    ("/api/attention/walter-haskins?percentile=abc", 400, "bad_request"),
    ("/api/politicians/nobody", 404, "unknown_id"),
    ("/api/neighbors/nobody", 404, "unknown_id"),
    ("/api/polarization/nobody", 404, "unknown_id"),
    ("/api/attention/nobody", 404, "unknown_id"),
    ("/api/attention/beatrice-langford", 404, "no_attention"),
    ("/api/words/qqqq/drift?party=dem", 404, "out_of_vocabulary"),
    ("/api/nothing/here", 404, "not_found"),
    ("/api/neighbors/walter-haskins?k=11", 409, "insufficient_population"),
    ("/api/polarization/walter-haskins?k=20", 409, "insufficient_population"),
    ("/api/polarization/arthur-penrose", 409, "not_major_party"),
];

pub const DATASETS: &[&str] = &["political", "background"];
pub const PROVENANCES: &[&str] = &["d2v", "external"];

pub async fn schema_failures() -> Vec<String> {
    let mut out = Vec::new();
    for (uri, schema) in OK_CASES {
        let (status, v) = get(uri).await;
        if status != StatusCode::OK {
            out.push(format!("{uri}: status {status}: {v}"));
        } else if let Err(e) = check_schema(schema, &v) {
            out.push(format!("{uri}: {e}"));
        }
    }
    out
}

pub async fn error_code_failures() -> Vec<String> {
    let mut out = Vec::new();
    for (uri, status, code) in ERROR_CASES {
        let (got, v) = get(uri).await;
        if got.as_u16() != *status || v["error"]["code"] != *code {
            out.push(format!("{uri}: expected {status} {code}, got {got} {v}"));
        } else if let Err(e) = check_schema("Error", &v) {
            out.push(format!("{uri}: {e}"));
        }
    }
    out
}

/// Recomputes every candidate's ratio from /neighbors and compares it with
/// /polarization. Returns the mismatches and the number of comparisons.
pub async fn recomputation_failures() -> (Vec<String>, usize) {
    let snap = snapshot();
    let mut out = Vec::new();
    let mut n = 0;
    let majors: Vec<_> = snap.corpus.iter().filter(|p| p.party.is_major()).collect();
    for p in &majors {
        for ds in DATASETS {
            for prov in PROVENANCES {
                for k in [1, 4, 10] {
                    let q = format!("?dataset={ds}&provenance={prov}&k={k}");
                    let (s1, nb) = get(&format!("/api/neighbors/{}{q}", p.id)).await;
                    let (s2, pol) = get(&format!("/api/polarization/{}{q}", p.id)).await;
                    if s1 != StatusCode::OK || s2 != StatusCode::OK {
                        out.push(format!("{} {q}: statuses {s1} {s2}", p.id));
                        continue;
                    }
                    let party = pol["party"].as_str().unwrap();
                    let list = nb["neighbors"].as_array().unwrap();
                    let same = list.iter().filter(|x| x["party"] == party).count();
                    let ratio = same as f64 / list.len() as f64;
                    let ids = |v: &Value| v.as_array().unwrap().iter().map(|x| x["id"].clone()).collect::<Vec<_>>();
                    if list.len() != k || pol["ratio"].as_f64() != Some(ratio) || ids(&nb["neighbors"]) != ids(&pol["neighbors"]) {
                        out.push(format!("{} {q}: client ratio {ratio} vs {}", p.id, pol["ratio"]));
                    }
                    n += 1;
                }
            }
        }
    }
    (out, n)
}
