//! Real HTTP providers against a local fake server. The API key is set in
//! the process environment, so this binary holds a single test.

mod common;

use std::sync::{Arc, Mutex};
use std::thread;

use axum::extract::State;
use axum::http::HeaderMap;
use axum::routing::post;
use axum::{Json, Router};
use common::{snapshot, Workspace};
use mathqa_core::retrieval::{EmbeddingProvider, HashingEmbedder};
use serde_json::{json, Value};

const KEY_VAR: &str = "MATHQA_TEST_PROVIDER_KEY";
const SECRET: &str = "sk-test-4f1d9c77-never-persist";

#[derive(Default)]
struct Seen {
    auth: Vec<Option<String>>,
}

type Shared = Arc<Mutex<Seen>>;

fn record(seen: &Shared, headers: &HeaderMap) {
    let auth = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    seen.lock().unwrap().auth.push(auth);
}

async fn embeddings(State(seen): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    record(&seen, &headers);
    let text = body["input"][0].as_str().unwrap_or_default();
    let vector = HashingEmbedder::default().embed(text).unwrap();
    Json(json!({ "object": "list", "data": [{ "index": 0, "embedding": vector }], "model": body["model"] }))
}

async fn chat(State(seen): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    record(&seen, &headers);
    let system = body["messages"][0]["content"].as_str().unwrap_or_default();
    let question = body["messages"].as_array().unwrap().last().unwrap()["content"]
        .as_str()
        .unwrap_or_default();
    let grounded = system.contains("===");
    let content = if grounded {
        format!("Here is help with {question}: we write it when the numbers share a pattern.")
    } else {
        format!("Good question about {question}.")
    };
    Json(json!({
        "id": "fake",
        "object": "chat.completion",
        "model": body["model"],
        "choices": [{ "index": 0, "message": { "role": "assistant", "content": content }, "finish_reason": "stop" }]
    }))
}

fn fake_provider() -> (String, Shared) {
    let seen = Shared::default();
    let app = Router::new()
        .route("/v1/embeddings", post(embeddings))
        .route("/v1/chat/completions", post(chat))
        .with_state(seen.clone());
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (format!("http://{addr}"), seen)
}

#[test]
fn key_is_sent_but_never_written() {
    std::env::set_var(KEY_VAR, SECRET);
    let (base_url, seen) = fake_provider();
    let ws = Workspace::new();
    let book = ws.path("book.txt").display().to_string();
    let queries = ws.path("queries.jsonl").display().to_string();
    let global = ["--base-url", base_url.as_str(), "--api-key-env", KEY_VAR];
    let stages: Vec<Vec<&str>> = vec![
        vec!["ingest", "--corpus", &book],
        vec!["embed"],
        vec!["retrieve", "--query", "what is a concept3"],
        vec!["generate", "--queries", &queries],
        vec!["score"],
        vec![
            "campaign-create",
            "--id",
            "c1",
            "--annotators",
            "A,B,C",
            "--survey-sizes",
            "6",
        ],
        vec!["analyze", "--campaign", "c1", "--metrics", "scores.csv"],
    ];
    let mut printed = String::new();
    let mut calls = 0;
    for s in &stages {
        let args: Vec<&str> = global.iter().copied().chain(s.iter().copied()).collect();
        let (o, out) = ws.ok(&args);
        calls += o.provider_calls.total();
        printed.push_str(&out);
    }
    let requests = seen.lock().unwrap().auth.clone();
    assert_eq!(requests.len(), calls);
    // 18 subsections, 1 retrieve query, 5 more queries (q03 was cached by retrieve), 18 chat calls.
    assert_eq!(calls, 18 + 1 + 5 + 18);
    assert!(requests
        .iter()
        .all(|a| a.as_deref() == Some(&format!("Bearer {SECRET}") as &str)));

    let before = snapshot(&ws.data());
    for s in &stages {
        let args: Vec<&str> = global.iter().copied().chain(s.iter().copied()).collect();
        let (o, out) = ws.ok(&args);
        assert_eq!(o.provider_calls.total(), 0, "{s:?}");
        printed.push_str(&out);
    }
    assert_eq!(seen.lock().unwrap().auth.len(), calls);
    let after = snapshot(&ws.data());
    assert_eq!(before, after);

    assert!(!printed.contains(SECRET));
    for (path, bytes) in &after {
        let text = String::from_utf8_lossy(bytes);
        assert!(!text.contains(SECRET), "{} holds the key", path.display());
    }
    let run = std::fs::read_to_string(ws.data().join("run.jsonl")).unwrap();
    assert!(run.contains("we write it when the numbers share a pattern"));
}
