mod common;

use axum::body::Body;
use axum::http::{HeaderValue, Request, StatusCode};
use common::*;
use polariscope::ann::exact_knn;
use polariscope::corpus::PartyKind;
use polariscope::embed::DatasetKind;
use polariscope_service::{api, Snapshot, Source};
use serde_json::Value;
use tower::ServiceExt;

#[tokio::test]
async fn responses_match_openapi_schemas() {
    let failures = schema_failures().await;
    assert!(failures.is_empty(), "{failures:#?}");
}

#[tokio::test]
async fn error_statuses_and_codes() {
    let failures = error_code_failures().await;
    assert!(failures.is_empty(), "{failures:#?}");
}

#[tokio::test]
async fn polarization_agrees_with_neighbors() {
    let (failures, n) = recomputation_failures().await;
    assert!(failures.is_empty(), "{failures:#?}");
    assert_eq!(n, 11 * 2 * 2 * 3);
}

#[tokio::test]
async fn neighbors_follow_exact_order() {
    let snap = snapshot();
    for (kind, src) in snap.datasets().collect::<Vec<_>>() {
        let set = snap.index(kind, src).unwrap().set();
        for id in ["walter-haskins", "dorothy-pruitt", "rosa-delgado"] {
            let q = format!("/api/neighbors/{id}?dataset={}&provenance={}&k=4", kind.as_str(), src.as_str());
            let (status, v) = get(&q).await;
            assert_eq!(status, StatusCode::OK, "{q}");
            let expected: Vec<String> = exact_knn(set, set.get(id).unwrap(), set.len())
                .unwrap()
                .into_iter()
                .filter(|n| n.id != id && snap.parties[&n.id] != PartyKind::Other)
                .take(4)
                .map(|n| n.id)
                .collect();
            let got: Vec<&str> = v["neighbors"].as_array().unwrap().iter().map(|n| n["id"].as_str().unwrap()).collect();
            assert_eq!(got, expected, "{q}");
            let ranks: Vec<u64> = v["neighbors"].as_array().unwrap().iter().map(|n| n["rank"].as_u64().unwrap()).collect();
            assert_eq!(ranks, [1, 2, 3, 4]);
        }
    }
}

#[tokio::test]
async fn neighbors_skip_self_and_minor_parties() {
    let (_, v) = get("/api/neighbors/walter-haskins?k=10").await;
    let ids: Vec<&str> = v["neighbors"].as_array().unwrap().iter().map(|n| n["id"].as_str().unwrap()).collect();
    assert_eq!(ids.len(), 10);
    assert!(!ids.contains(&"walter-haskins") && !ids.contains(&"arthur-penrose"));
    assert_eq!(v["neighbors"][0]["display_name"].as_str().map(|s| s.is_empty()), Some(false));
}

#[tokio::test]
async fn same_party_neighborhood_scores_one() {
    let (status, v) = get("/api/polarization/walter-haskins?dataset=political&provenance=external&k=4").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["ratio"], 1.0);
    assert_eq!(v["same_party_count"], 4);
    assert_eq!(v["baseline"], 0.5);
}

#[tokio::test]
async fn word_neighbors_shape() {
    let (status, v) = get("/api/words/gun/neighbors?party=dem&k=15").await;
    assert_eq!(status, StatusCode::OK);
    let list = v["neighbors"].as_array().unwrap();
    assert!(!list.is_empty() && list.len() <= 15);
    let ranks: Vec<u64> = list.iter().map(|n| n["rank"].as_u64().unwrap()).collect();
    assert_eq!(ranks, (1..=list.len() as u64).collect::<Vec<_>>());
    assert_eq!(list[0]["token"], "gun");

    let (_, v) = get("/api/words/GUN/neighbors?party=rep&probe=gun").await;
    assert_eq!(v["probe_ranks"]["gun"], 1);
    let (_, v) = get("/api/words/qqqq/neighbors?party=dem").await;
    assert_eq!(v["oov"], true);
    assert_eq!(v["neighbors"], Value::Array(vec![]));
}

#[tokio::test]
async fn drift_lists_every_phase() {
    let (status, v) = get("/api/words/gun/drift?party=dem&k=3").await;
    assert_eq!(status, StatusCode::OK);
    let phases: Vec<u64> = v["phases"].as_array().unwrap().iter().map(|p| p["phase"].as_u64().unwrap()).collect();
    assert_eq!(phases, [1, 2, 3, 4]);
}

#[tokio::test]
async fn attention_percentiles() {
    let selected = |v: &Value| v["tokens"].as_array().unwrap().iter().filter(|t| t["selected"] == true).count();
    let (_, v) = get("/api/attention/walter-haskins?percentile=90").await;
    assert_eq!(selected(&v), 11);
    assert_eq!(v["top"].as_array().unwrap().len(), 11);
    assert_eq!(v["top"][0]["token"], "w100");
    let (_, v) = get("/api/attention/walter-haskins?percentile=0").await;
    assert_eq!(selected(&v), 100);

    // Records with markers: the markers are reported but never selected.
    let (_, v) = get("/api/attention/margaret-ellison?percentile=0").await;
    let tokens = v["tokens"].as_array().unwrap();
    assert_eq!(tokens.first().unwrap()["special"], true);
    assert_eq!(selected(&v), tokens.len() - 2);
}

#[tokio::test]
async fn politician_listing() {
    let (_, v) = get("/api/politicians").await;
    assert_eq!(v["total"], 12);
    let names: Vec<&str> = v["politicians"].as_array().unwrap().iter().map(|p| p["display_name"].as_str().unwrap()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    let (_, v) = get("/api/politicians?q=PRUITT").await;
    assert_eq!(v["politicians"][0]["id"], "dorothy-pruitt");
    let (_, v) = get("/api/politicians?party=other").await;
    assert_eq!(v["total"], 1);
    assert_eq!(v["politicians"][0]["party"], "Other");
    let (_, v) = get("/api/politicians?party=dem&phase=4").await;
    assert!(v["politicians"].as_array().unwrap().iter().all(|p| p["party"] == "Democratic" && p["phases"].as_array().unwrap().contains(&4.into())));
}

#[tokio::test]
async fn meta_describes_snapshot() {
    let (_, v) = get("/api/meta").await;
    assert_eq!(v["politicians"]["total"], 12);
    assert_eq!(v["politicians"]["other"], 1);
    assert_eq!(v["phases"].as_array().unwrap().len(), 4);
    assert_eq!(v["datasets"].as_array().unwrap().len(), 4);
    assert_eq!(v["provenances"], serde_json::json!(["d2v", "external"]));
    assert_eq!(v["attention_records"], 7);
}

#[tokio::test]
async fn responses_are_deterministic() {
    let fresh = std::sync::Arc::new(Snapshot::load(fixture_workdir()).unwrap());
    for (uri, _) in OK_CASES {
        let (_, a) = get_raw(app(), uri).await;
        let (_, b) = get_raw(app(), uri).await;
        let (_, c) = get_raw(api::router(fresh.clone(), None), uri).await;
        assert_eq!(a, b, "{uri}");
        assert_eq!(a, c, "{uri}");
    }
}

#[tokio::test]
async fn cors_allows_configured_origin() {
    let origin = HeaderValue::from_static("http://localhost:5173");
    let app = api::router(snapshot(), Some(origin.clone()));
    let req = Request::get("/api/meta").header("origin", origin.clone()).body(Body::empty()).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    assert_eq!(res.headers().get("access-control-allow-origin"), Some(&origin));
    let res = api::router(snapshot(), None).oneshot(Request::get("/api/meta").header("origin", origin).body(Body::empty()).unwrap()).await.unwrap();
    assert!(res.headers().get("access-control-allow-origin").is_none());
}

#[test]
fn snapshot_ids_are_corpus_ids() {
    let snap = snapshot();
    for (kind, src) in snap.datasets() {
        for id in snap.index(kind, src).unwrap().set().ids() {
            assert!(snap.politician(id).is_some(), "{id}");
        }
    }
    assert!(snap.index(DatasetKind::Political, Source::D2v).is_some());
}
