mod common;

use std::fs;

use common::{snapshot, Workspace};
use mathqa_app::AppError;
use mathqa_core::campaign::Campaign;
use mathqa_core::corpus::SegmentTree;
use mathqa_core::generation::RunArtifact;
use mathqa_core::metrics::MetricTable;

fn small_campaign_args() -> Vec<&'static str> {
    vec![
        "campaign-create",
        "--id",
        "c1",
        "--annotators",
        "A,B,C",
        "--survey-sizes",
        "6",
    ]
}

#[test]
fn ingest_embed_retrieve() {
    let ws = Workspace::new();
    let book = ws.path("book.txt").display().to_string();
    let (_, out) = ws.ok(&["ingest", "--corpus", &book]);
    assert!(out.contains("3 chapters, 9 sections, 18 subsections"), "{out}");
    let (o, _) = ws.ok(&["embed", "--mock-embeddings"]);
    assert_eq!(o.provider_calls.embeddings, 18);
    let (o, out) = ws.ok(&["retrieve", "--query", "what is a concept4", "--mock-embeddings"]);
    assert_eq!(o.provider_calls.embeddings, 1);
    let first = out.lines().next().unwrap();
    let (id, sim) = first.split_once('\t').unwrap();
    let tree = SegmentTree::from_json(&fs::read_to_string(ws.data().join("corpus.json")).unwrap()).unwrap();
    assert_eq!(tree.get(id).unwrap().title, "Topic 4");
    assert!(sim.parse::<f64>().unwrap() > 0.0);
    assert!(out.contains("concept4"));
}

#[test]
fn full_pipeline_is_idempotent() {
    let ws = Workspace::new();
    let book = ws.path("book.txt").display().to_string();
    let queries = ws.path("queries.jsonl").display().to_string();
    let export = ws.path("export");
    let export_s = export.display().to_string();
    let exported_jsonl = ws.path("c1-copy.jsonl").display().to_string();
    let stages: Vec<Vec<&str>> = vec![
        vec!["ingest", "--corpus", &book],
        vec!["embed", "--mock-embeddings"],
        vec!["retrieve", "--query", "what is a concept2", "--mock-embeddings"],
        vec!["generate", "--queries", &queries, "--mock-llm", "--mock-embeddings"],
        vec!["score"],
        small_campaign_args(),
        vec!["campaign-export", "--id", "c1", "--out", &exported_jsonl],
        vec![
            "campaign-export",
            "--id",
            "c1",
            "--out",
            &export_s,
            "--format",
            "csv",
            "--anonymize",
        ],
        vec!["campaign-import", "--file", &exported_jsonl],
        vec!["analyze", "--campaign", "c1", "--metrics", "scores.csv"],
    ];
    let mut first_calls = 0;
    for s in &stages {
        first_calls += ws.ok(s).0.provider_calls.total();
    }
    assert!(first_calls > 0);
    let before = (snapshot(&ws.data()), snapshot(&export));
    for s in &stages {
        let (o, _) = ws.ok(s);
        assert_eq!(o.provider_calls.total(), 0, "{s:?}");
        assert!(o.written.is_empty(), "{s:?} wrote {:?}", o.written);
    }
    assert_eq!((snapshot(&ws.data()), snapshot(&export)), before);

    let run = RunArtifact::load(ws.data().join("run.jsonl")).unwrap();
    assert_eq!(run.len(), 18);
    let table = MetricTable::load(ws.data().join("scores.csv")).unwrap();
    assert_eq!(table.rows.len(), 36);
}

#[test]
fn generate_resumes_without_duplicates() {
    let ws = Workspace::new();
    ws.generate();
    let queries = ws.path("queries.jsonl").display().to_string();
    // Add a condition: only the new cells are generated.
    let (o, _) = ws.ok(&[
        "generate",
        "--queries",
        &queries,
        "--conditions",
        "none,low,high,ir",
        "--mock-llm",
        "--mock-embeddings",
    ]);
    assert_eq!(o.provider_calls.chat, 6);
    let text = fs::read_to_string(ws.data().join("run.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 24);
}

#[test]
fn missing_prerequisites_are_usage_errors() {
    let ws = Workspace::new();
    let queries = ws.path("queries.jsonl").display().to_string();
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["embed", "--mock-embeddings"], "corpus.json"),
        (vec!["retrieve", "--query", "x", "--mock-embeddings"], "corpus.json"),
        (
            vec!["generate", "--queries", &queries, "--mock-llm", "--mock-embeddings"],
            "corpus.json",
        ),
        (vec!["generate", "--queries", "nope.jsonl", "--mock-llm"], "nope.jsonl"),
        (vec!["score"], "run.jsonl"),
        (small_campaign_args(), "run.jsonl"),
        (vec!["campaign-export", "--id", "c9", "--out", "x.jsonl"], "c9.jsonl"),
        (vec!["analyze", "--campaign", "c9"], "c9.jsonl"),
    ];
    for (args, artifact) in cases {
        match ws.run(&args).0 {
            Err(e @ AppError::MissingPrerequisite { .. }) => {
                assert_eq!(e.exit_code(), 2);
                let report = e.report();
                assert_eq!(report["error"], "missing-prerequisite");
                assert!(
                    report["artifact"].as_str().unwrap().ends_with(artifact),
                    "{args:?}: {report}"
                );
            }
            other => panic!("{args:?}: {other:?}"),
        }
    }

    // A none-only run needs no index.
    let (o, _) = ws.ok(&["generate", "--queries", &queries, "--conditions", "none", "--mock-llm"]);
    assert_eq!(o.provider_calls.chat, 6);
    let book = ws.path("book.txt").display().to_string();
    ws.ok(&["ingest", "--corpus", &book]);
    match ws
        .run(&["generate", "--queries", &queries, "--mock-llm", "--mock-embeddings"])
        .0
    {
        Err(AppError::MissingPrerequisite { artifact, .. }) => assert!(artifact.ends_with("index.json")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_invocations_are_usage_errors() {
    let ws = Workspace::new();
    for args in [
        vec!["frobnicate"],
        vec!["analyze"],
        vec!["ingest"],
        vec!["generate", "--queries", "q", "--conditions", "medium"],
    ] {
        let err = ws.run(&args).0.unwrap_err();
        assert!(matches!(err, AppError::Usage(_)), "{args:?}: {err:?}");
        assert_eq!(err.exit_code(), 2);
    }
    let err = ws.run(&["--token-budget", "0", "score"]).0.unwrap_err();
    assert!(matches!(err, AppError::Config(_)));
    let (o, out) = ws.ok(&["--help"]);
    assert_eq!(o.command, "help");
    assert!(out.contains("campaign-create") && out.contains("precedence"));
}

#[test]
fn stale_index_is_reported() {
    let ws = Workspace::new();
    ws.generate();
    let mut book = fs::read_to_string(ws.path("book.txt")).unwrap();
    book.push_str("### Late topic\n\nA late addition.\n");
    fs::write(ws.path("book.txt"), book).unwrap();
    let b = ws.path("book.txt").display().to_string();
    ws.ok(&["ingest", "--corpus", &b]);
    let err = ws
        .run(&["retrieve", "--query", "late", "--mock-embeddings"])
        .0
        .unwrap_err();
    assert!(
        matches!(err, AppError::Usage(ref m) if m.contains("re-run `mathqa embed`")),
        "{err}"
    );
    // Re-embedding only calls the provider for the new subsection.
    let (o, _) = ws.ok(&["embed", "--mock-embeddings"]);
    assert_eq!(o.provider_calls.embeddings, 1);
}

#[test]
fn campaign_create_rejects_a_different_design_under_the_same_id() {
    let ws = Workspace::new();
    ws.generate();
    ws.ok(&small_campaign_args());
    let err = ws
        .run(&[
            "campaign-create",
            "--id",
            "c1",
            "--annotators",
            "A,B,C,D",
            "--survey-sizes",
            "6",
        ])
        .0
        .unwrap_err();
    assert!(matches!(err, AppError::Usage(_)), "{err}");
    let a = fs::read_to_string(ws.data().join("campaigns/c1.jsonl")).unwrap();
    ws.ok(&[
        "--seed",
        "9",
        "campaign-create",
        "--id",
        "c2",
        "--annotators",
        "A,B,C",
        "--survey-sizes",
        "6",
    ]);
    let b = fs::read_to_string(ws.data().join("campaigns/c2.jsonl")).unwrap();
    let (a, b) = (Campaign::from_jsonl(&a).unwrap(), Campaign::from_jsonl(&b).unwrap());
    assert_ne!(a.seed, b.seed);
    assert_eq!(a.tasks.len(), 18);
}

#[test]
fn relevance_campaign_and_csv_import() {
    let ws = Workspace::new();
    ws.generate();
    ws.ok(&[
        "campaign-create",
        "--id",
        "rel",
        "--kind",
        "relevance",
        "--annotators",
        "X,Y,Z",
    ]);
    let c = Campaign::from_jsonl(&fs::read_to_string(ws.data().join("campaigns/rel.jsonl")).unwrap()).unwrap();
    assert_eq!(c.tasks.len(), 18);

    let csv = ws.path("released.csv");
    fs::write(
        &csv,
        "query_id,annotator_id,relevance\nq00,X,perfect\nq00,Y,partial\nq01,X,wrong\nq01,Y,topic\n",
    )
    .unwrap();
    let csv_s = csv.display().to_string();
    let (_, out) = ws.ok(&["campaign-import", "--file", &csv_s]);
    assert!(out.contains("4 relevance"));
    let stored = fs::read_to_string(ws.data().join("judgments/released.csv")).unwrap();
    assert_eq!(
        stored,
        "query_id,annotator_id,relevance\nq00,X,3\nq00,Y,2\nq01,X,0\nq01,Y,1\n"
    );
    let (_, out) = ws.ok(&["analyze", "--judgments", "released", "--json"]);
    let report: serde_json::Value = serde_json::from_str(out.split("\nwrote").next().unwrap()).unwrap();
    assert_eq!(report["relevance"]["n_queries"], 2);

    fs::write(&csv, "query_id,annotator_id,relevance\nq00,X,great\n").unwrap();
    assert!(matches!(
        ws.run(&["campaign-import", "--file", &csv_s]).0,
        Err(AppError::Failed(_))
    ));
}

#[test]
fn config_file_and_env_are_layered() {
    let mut ws = Workspace::new();
    let cfg = ws.path("mathqa.toml");
    fs::write(&cfg, "token_budget = 5\nseed = 1\n").unwrap();
    ws.generate();
    let cfg_s = cfg.display().to_string();
    // The file's tiny budget forces truncation of the retrieved document.
    let (_, out) = ws.ok(&[
        "--config",
        &cfg_s,
        "retrieve",
        "--query",
        "what is a concept1",
        "--mock-embeddings",
        "--json",
    ]);
    assert!(out.contains("\"truncated\": true"), "{out}");
    ws.env.insert("MATHQA_TOKEN_BUDGET".into(), "3000".into());
    let (_, out) = ws.ok(&[
        "--config",
        &cfg_s,
        "retrieve",
        "--query",
        "what is a concept1",
        "--mock-embeddings",
        "--json",
    ]);
    assert!(out.contains("\"truncated\": false"), "{out}");
    let (_, out) = ws.ok(&[
        "--config",
        &cfg_s,
        "--token-budget",
        "5",
        "retrieve",
        "--query",
        "what is a concept1",
        "--mock-embeddings",
        "--json",
    ]);
    assert!(out.contains("\"truncated\": true"), "{out}");
    ws.env.insert("MATHQA_CONFIG".into(), cfg_s.clone());
    ws.env.remove("MATHQA_TOKEN_BUDGET");
    let (_, out) = ws.ok(&[
        "retrieve",
        "--query",
        "what is a concept1",
        "--mock-embeddings",
        "--json",
    ]);
    assert!(out.contains("\"truncated\": true"), "{out}");
}
