mod common;

use std::fs;
use std::path::PathBuf;
use std::thread;

use common::{condition_leaks, Workspace};
use mathqa_app::{AppConfig, ServerState, ServiceHandle};
use mathqa_core::campaign::CampaignStore;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

const TOKEN_VAR: &str = "MATHQA_ADMIN_TOKEN";
const TOKEN: &str = "admin-7d1e";

fn config(ws: &Workspace) -> AppConfig {
    AppConfig {
        data_dir: ws.data(),
        ..AppConfig::default()
    }
}

fn start(ws: &Workspace, token: Option<&str>, static_dir: Option<PathBuf>) -> (ServiceHandle, String) {
    let token = token.map(str::to_string);
    let env = move |k: &str| if k == TOKEN_VAR { token.clone() } else { None };
    let state = ServerState::from_config(&config(ws), &env).unwrap();
    let handle = ServiceHandle::start(state, "127.0.0.1:0", static_dir).unwrap();
    let base = format!("http://{}", handle.addr());
    (handle, base)
}

/// 51 queries, mock generation and the default study campaign `study`.
fn study_workspace() -> Workspace {
    let ws = Workspace::with_queries(51);
    ws.generate();
    ws.ok(&["campaign-create", "--id", "study"]);
    ws
}

fn next_task(client: &Client, base: &str, annotator: &str) -> Value {
    let r = client
        .get(format!("{base}/api/campaigns/study/next-task?annotator={annotator}"))
        .send()
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    r.json().unwrap()
}

fn submit(client: &Client, base: &str, body: &Value) -> (StatusCode, Value) {
    let r = client
        .post(format!("{base}/api/campaigns/study/submissions"))
        .json(body)
        .send()
        .unwrap();
    (r.status(), r.json().unwrap())
}

fn ranking(task: &Value, annotator: &str) -> Value {
    json!({
        "task_id": task["task_id"],
        "annotator_id": annotator,
        "ranks": [1, 2, 3],
        "groundedness": [2, 1, 0],
    })
}

fn annotators() -> Vec<String> {
    (1..=9).map(|i| format!("A{i}")).collect()
}

#[test]
fn study_campaign_end_to_end() {
    let ws = study_workspace();
    let (handle, base) = start(&ws, None, None);
    let client = Client::new();

    let health: Value = client.get(format!("{base}/api/health")).send().unwrap().json().unwrap();
    assert_eq!(health, json!({ "status": "ok", "campaigns": 1 }));

    let progress: Value = client
        .get(format!("{base}/api/campaigns/study/progress"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    let mut assigned: Vec<u64> = progress["annotators"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["assigned"].as_u64().unwrap())
        .collect();
    assigned.sort_unstable_by(|a, b| b.cmp(a));
    assert_eq!(assigned, [30, 30, 21, 21, 21, 15, 15, 15, 6]);
    assert_eq!(progress["total_tasks"], 174);

    // Error shapes, using A1's first task.
    let task = next_task(&client, &base, "A1");
    assert_eq!(task["position"], 1);
    assert_eq!(next_task(&client, &base, "A1"), task);
    let mut tied = ranking(&task, "A1");
    tied["ranks"] = json!([1, 1, 2]);
    let (status, body) = submit(&client, &base, &tied);
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["errors"][0]["field"], "ranks");
    let mut malformed = ranking(&task, "A1");
    malformed["ranks"] = json!("x");
    let (status, body) = submit(&client, &base, &malformed);
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["errors"][0]["field"], "ranks");
    let r = client
        .post(format!("{base}/api/campaigns/study/submissions"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    assert_eq!(r.json::<Value>().unwrap()["errors"][0]["field"], "body");
    let r = client
        .get(format!("{base}/api/campaigns/study/next-task"))
        .send()
        .unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let r = client
        .get(format!("{base}/api/campaigns/nope/next-task?annotator=A1"))
        .send()
        .unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    let (status, _) = submit(&client, &base, &ranking(&task, "A2"));
    assert!(
        status == StatusCode::FORBIDDEN || status == StatusCode::NOT_FOUND,
        "{status}"
    );
    let (status, ack) = submit(&client, &base, &ranking(&task, "A1"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["remaining"], 29);
    let (status, body) = submit(&client, &base, &ranking(&task, "A1"));
    assert_eq!(status, StatusCode::CONFLICT, "{body}");

    // Every annotator works through their plan concurrently.
    let workers: Vec<_> = annotators()
        .into_iter()
        .map(|a| {
            let base = base.clone();
            thread::spawn(move || {
                let client = Client::new();
                let mut done = 0;
                loop {
                    let task = next_task(&client, &base, &a);
                    if task.is_null() {
                        break done;
                    }
                    let leaks = condition_leaks(&task);
                    assert!(leaks.is_empty(), "{a}: {leaks:?}");
                    assert_eq!(task["responses"].as_array().unwrap().len(), 3);
                    let (status, body) = submit(&client, &base, &ranking(&task, &a));
                    assert_eq!(status, StatusCode::OK, "{body}");
                    done += 1;
                }
            })
        })
        .collect();
    let done: usize = workers.into_iter().map(|w| w.join().unwrap()).sum();
    assert_eq!(done, 173);

    let progress: Value = client
        .get(format!("{base}/api/campaigns/study/progress"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(progress["submitted"], 174);
    assert_eq!(progress["percent_complete"], 100.0);
    assert!(progress["annotators"]
        .as_array()
        .unwrap()
        .iter()
        .all(|a| a["assigned"] == a["submitted"]));

    handle.shutdown().unwrap();
    let reopened = CampaignStore::open(ws.data().join("campaigns")).unwrap();
    assert_eq!(reopened.progress("study").unwrap().submitted, 174);
}

#[test]
fn admin_routes() {
    let ws = study_workspace();
    let (handle, base) = start(&ws, None, None);
    let client = Client::new();
    let r = client.get(format!("{base}/api/campaigns/study/report")).send().unwrap();
    assert_eq!(r.status(), StatusCode::FORBIDDEN);
    handle.shutdown().unwrap();

    let (_handle, base) = start(&ws, Some(TOKEN), None);
    let report = |token: Option<&str>| {
        let mut req = client.get(format!("{base}/api/campaigns/study/report"));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        req.send().unwrap()
    };
    assert_eq!(report(None).status(), StatusCode::UNAUTHORIZED);
    assert_eq!(report(Some("wrong")).status(), StatusCode::UNAUTHORIZED);
    let r = report(Some(TOKEN));
    assert_eq!(r.status(), StatusCode::OK);
    let body = r.text().unwrap();
    assert!(!body.contains(TOKEN));
    assert!(serde_json::from_str::<Value>(&body).unwrap().is_object());

    let create = |body: Value| {
        client
            .post(format!("{base}/api/campaigns"))
            .bearer_auth(TOKEN)
            .json(&body)
            .send()
            .unwrap()
    };
    let r = create(json!({ "id": "second" }));
    assert_eq!(r.status(), StatusCode::CREATED);
    let body: Value = r.json().unwrap();
    assert_eq!(body["tasks"], 174);
    assert_eq!(body["survey_sizes"], json!([15, 15, 15, 6]));
    assert_eq!(create(json!({ "id": "second" })).status(), StatusCode::CONFLICT);
    assert_eq!(create(json!({ "id": 3 })).status(), StatusCode::BAD_REQUEST);
    assert!(ws.data().join("campaigns/second.jsonl").exists());

    // The CLI derives the same seed, so it sees the HTTP-created campaign as its own.
    let before = fs::read(ws.data().join("campaigns/second.jsonl")).unwrap();
    let (o, _) = ws.ok(&["campaign-create", "--id", "second"]);
    assert!(o.written.is_empty());
    assert_eq!(fs::read(ws.data().join("campaigns/second.jsonl")).unwrap(), before);

    let empty = Workspace::new();
    let (_h, base) = start(&empty, Some(TOKEN), None);
    let r = client
        .post(format!("{base}/api/campaigns"))
        .bearer_auth(TOKEN)
        .json(&json!({ "id": "x" }))
        .send()
        .unwrap();
    assert_eq!(r.status(), StatusCode::CONFLICT);
    assert_eq!(r.json::<Value>().unwrap()["error"], "no-run");
}

#[test]
fn port_in_use_is_reported() {
    let ws = Workspace::new();
    let (handle, _) = start(&ws, None, None);
    let addr = handle.addr().to_string();
    let state = ServerState::from_config(&config(&ws), &|_| None).unwrap();
    assert!(ServiceHandle::start(state, &addr, None).is_err());
}

#[test]
fn serves_static_files() {
    let ws = Workspace::new();
    let site = ws.path("site");
    fs::create_dir_all(&site).unwrap();
    fs::write(site.join("index.html"), "<h1>annotate</h1>").unwrap();
    let (_handle, base) = start(&ws, None, Some(site));
    let client = Client::new();
    assert_eq!(
        client.get(format!("{base}/")).send().unwrap().text().unwrap(),
        "<h1>annotate</h1>"
    );
    assert_eq!(
        client.get(format!("{base}/api/health")).send().unwrap().status(),
        StatusCode::OK
    );
}
