use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use prefelicit::server::router;
use prefelicit::session::{SessionStore, StoreConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn quick_config(seed: u64) -> Value {
    json!({
        "policy": "h_dvf",
        "fit": { "max_iters": 20, "grad_samples": 100 },
        "rollout_fit": { "max_iters": 5, "grad_samples": 50 },
        "predictive_samples": 400,
        "seed": seed
    })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, v)
}

async fn wait_for_answerable(app: &Router, id: &str) -> Value {
    for _ in 0..2000 {
        let (s, v) = call(app, "GET", &format!("/sessions/{id}"), None).await;
        assert_eq!(s, StatusCode::OK);
        if v["status"] != "fitting" && v["status"] != "selecting" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    panic!("session {id} never left fitting");
}

async fn demo_session(app: &Router, horizon: usize, seed: u64) -> Value {
    let (_, table) = call(app, "GET", "/demo", None).await;
    let (s, v) = call(
        app,
        "POST",
        "/sessions",
        Some(json!({ "table": table, "horizon": horizon, "config": quick_config(seed) })),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v
}

fn answer_body(view: &Value, key: Option<&str>) -> Value {
    let pair = &view["question"]["pair"];
    json!({ "preferred": pair["second"], "other": pair["first"], "idempotency_key": key })
}

#[tokio::test]
async fn full_round_trip() {
    let app = router(SessionStore::in_memory(1), None).unwrap();
    let created = demo_session(&app, 3, 7).await;
    let id = created["id"].as_str().unwrap().to_owned();
    assert_eq!(created["status"], "awaiting_answer");
    assert_eq!(created["round"], 1);
    assert!(created["posterior"].as_array().unwrap().iter().all(|t| t == 1.0));

    let mut view = created;
    for round in 1..=3 {
        let (s, v) = call(
            &app,
            "POST",
            &format!("/sessions/{id}/answer"),
            Some(answer_body(&view, None)),
        )
        .await;
        assert_eq!(s, StatusCode::ACCEPTED, "{v}");
        assert_eq!(v["status"], "fitting");
        assert_eq!(v["answered"], round);
        view = wait_for_answerable(&app, &id).await;
    }
    assert_eq!(view["status"], "done");
    assert!(view["question"].is_null());
    assert_eq!(view["history"].as_array().unwrap().len(), 3);
    assert_eq!(view["metrics"].as_array().unwrap().len(), 4);

    let (s, export) = call(&app, "GET", &format!("/sessions/{id}/export"), None).await;
    assert_eq!(s, StatusCode::OK);
    let stmts = export["history"].as_array().unwrap();
    assert_eq!(stmts.len(), 3);
    let mut pairs: Vec<(u64, u64)> = stmts
        .iter()
        .map(|s| {
            let (a, b) = (s["preferred"].as_u64().unwrap(), s["other"].as_u64().unwrap());
            (a.min(b), a.max(b))
        })
        .collect();
    pairs.sort();
    pairs.dedup();
    assert_eq!(pairs.len(), 3);
    assert_eq!(export["seed"], 7);
    assert_eq!(export["theta"].as_array().unwrap().len(), 6);

    let (s, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/answer"),
        Some(json!({"preferred": 0, "other": 1})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn conflicts_and_idempotency() {
    let app = router(SessionStore::in_memory(2), None).unwrap();
    let view = demo_session(&app, 3, 3).await;
    let id = view["id"].as_str().unwrap();
    let uri = format!("/sessions/{id}/answer");

    let p = &view["question"]["pair"];
    let (a, b) = (p["first"].as_u64().unwrap(), p["second"].as_u64().unwrap());
    let other = (0..6u64).find(|&k| k != a && k != b).unwrap();
    let (s, e) = call(&app, "POST", &uri, Some(json!({"preferred": a, "other": other}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["error"], "conflict");
    let (_, unchanged) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(unchanged["answered"], 0);

    let (s, _) = call(&app, "POST", &uri, Some(answer_body(&view, Some("k")))).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let (s, v) = call(&app, "POST", &uri, Some(answer_body(&view, Some("k")))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["answered"], 1);
    let (s, _) = call(&app, "POST", &uri, Some(answer_body(&view, Some("other-key")))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    wait_for_answerable(&app, id).await;
}

#[tokio::test]
async fn not_found_and_validation() {
    let app = router(SessionStore::in_memory(0), None).unwrap();
    let (s, e) = call(&app, "GET", "/sessions/missing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(e["error"], "not_found");
    let (s, _) = call(&app, "GET", "/sessions/missing/export", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(
        &app,
        "POST",
        "/sessions/missing/answer",
        Some(json!({"preferred": 0, "other": 1})),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, e) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"csv": "id,a\nx,1\ny,abc\n", "horizon": 0})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let fields: Vec<&str> = e["fields"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["field"].as_str().unwrap())
        .collect();
    assert_eq!(fields, ["csv"]);

    let (_, table) = call(&app, "GET", "/demo", None).await;
    let (s, e) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"table": table, "horizon": 0, "config": {"budget": 0}})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let fields: Vec<&str> = e["fields"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["field"].as_str().unwrap())
        .collect();
    assert_eq!(fields, ["horizon", "config.budget"]);

    let (s, e) = call(&app, "POST", "/sessions", Some(json!({"horizon": 2, "bogus": 1}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["fields"].as_array().unwrap().len(), 2);

    let req = Request::builder()
        .method("POST")
        .uri("/sessions")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(
        app.clone().oneshot(req).await.unwrap().status(),
        StatusCode::BAD_REQUEST
    );

    let (s, v) = call(&app, "GET", "/sessions", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["sessions"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn csv_tables_are_accepted() {
    let app = router(SessionStore::in_memory(0), None).unwrap();
    let (s, v) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({
            "csv": "id,price,quality\ncar1,20000,3\ncar2,15000,4.5\ncar3,30000,5\n",
            "dataset": {"criteria": [{"name": "price", "direction": "cost"}]},
            "horizon": 2,
            "config": quick_config(0)
        })),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["alternatives"], json!(["car1", "car2", "car3"]));
    assert_eq!(v["question"]["alternatives"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn same_seed_same_first_question_and_cors() {
    let app = router(SessionStore::in_memory(5), Some("http://localhost:5173")).unwrap();
    let a = demo_session(&app, 2, 42).await;
    let b = demo_session(&app, 2, 42).await;
    assert_ne!(a["id"], b["id"]);
    assert_eq!(a["question"]["pair"], b["question"]["pair"]);

    let req = Request::builder()
        .method("OPTIONS")
        .uri("/sessions")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://localhost:5173");
}

#[tokio::test]
async fn persisted_sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = StoreConfig {
        data_dir: Some(dir.path().to_path_buf()),
        server_seed: 9,
    };
    let app = router(SessionStore::open(cfg.clone()).unwrap(), None).unwrap();
    let view = demo_session(&app, 2, 1).await;
    let id = view["id"].as_str().unwrap();
    call(
        &app,
        "POST",
        &format!("/sessions/{id}/answer"),
        Some(answer_body(&view, None)),
    )
    .await;
    let before = wait_for_answerable(&app, id).await;

    let restarted = router(SessionStore::open(cfg).unwrap(), None).unwrap();
    let (s, after) = call(&restarted, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(after, before);
    let log = std::fs::read_to_string(dir.path().join("sessions").join(id).join("events.jsonl")).unwrap();
    let kinds: Vec<String> = log
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["event"]
                .as_str()
                .unwrap()
                .to_owned()
        })
        .collect();
    assert_eq!(kinds, ["created", "question", "answer", "question"]);
}
