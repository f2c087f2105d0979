//! Drives the HTTP API in process: create an actor, stream a planted
//! scenario until the engine suspends, show the refusal, answer, resume.

use std::collections::BTreeMap;

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use http_body_util::BodyExt;
use rogue_core::mpg::SignalEvent;
use rogue_core::sim::generate_planted;
use rogue_service::api::{router, AppState};
use rogue_service::config::ServiceConfig;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (u16, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::main]
async fn main() {
    let app = router(AppState::new(ServiceConfig::default()).unwrap());
    let s = generate_planted(7, 12, 3, 40, 60).unwrap();
    let truth = s.ground_truth.as_ref().unwrap();
    let segment: Vec<&str> = truth.segment.iter().map(|n| n.as_str()).collect();
    println!("planted segment {} from t={}", segment.join(","), truth.onset);

    let initial: Value = serde_json::from_str(&s.initial.to_canonical_json()).unwrap();
    let (status, _) = call(&app, "PUT", "/actors/ana", Some(initial)).await;
    println!("PUT /actors/ana -> {status}");

    let mut by_step: BTreeMap<u64, Vec<SignalEvent>> = BTreeMap::new();
    for e in &s.events {
        by_step.entry(e.t).or_default().push(e.clone());
    }
    let mut suspended = None;
    for (t, events) in by_step {
        let (_, step) = call(&app, "POST", "/actors/ana/signals", Some(json!({ "t": t, "events": events }))).await;
        if let Some(rid) = step["suspended"].as_str() {
            println!("t={t} epsilon={:.3} suspended by {rid}", step["epsilon"].as_f64().unwrap());
            suspended = Some((t, rid.to_owned()));
            break;
        }
    }
    let (t, rid) = suspended.expect("planted anomaly was not detected");

    let (_, pending) = call(&app, "GET", "/actors/ana/clarifications/pending", None).await;
    println!("question: {}", pending[0]["question"]);
    for (i, opt) in pending[0]["options"].as_array().unwrap().iter().enumerate() {
        println!("  [{i}] {}", opt["label"]);
    }

    let (status, err) = call(&app, "GET", "/actors/ana/prediction", None).await;
    println!("GET prediction while suspended -> {status} {}", err["error"]);

    let answer = json!({ "chosen": 0, "answered_at": t + 1 });
    let (status, ep) = call(&app, "POST", &format!("/actors/ana/clarifications/{rid}/answer"), Some(answer)).await;
    println!("answer -> {status}, episode {} resolved={}", ep["episode_id"], ep["resolved"]);

    let (status, _) = call(&app, "GET", "/actors/ana/prediction", None).await;
    println!("GET prediction after answer -> {status}");
    let (_, top) = call(&app, "GET", "/actors/ana/recommendation?top=3", None).await;
    println!("top nodes {top}");
}
