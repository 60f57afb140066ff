use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use analyst_pod::api;
use analyst_pod::graph::seed_memo_fixture;
use analyst_pod::pod::{default_assets_dir, Pod, PodConfig};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

struct Server {
    base: String,
    client: Client,
    pod: Arc<Pod>,
    _home: tempfile::TempDir,
}

fn start(seed_graph: bool) -> Server {
    let home = tempfile::tempdir().unwrap();
    let pod = Arc::new(Pod::open(PodConfig::new(home.path()).seed(Some(7))).unwrap());
    if seed_graph {
        seed_memo_fixture(pod.store(), &default_assets_dir().join("graph-fixture")).unwrap();
    }
    let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
    let served = Arc::clone(&pod);
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(api::serve(
            served,
            "127.0.0.1:0".parse().unwrap(),
            move |a| tx.send(a).unwrap(),
        ))
        .unwrap();
    });
    let addr = rx.recv_timeout(Duration::from_secs(10)).unwrap();
    Server {
        base: format!("http://{addr}"),
        client: Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .unwrap(),
        pod,
        _home: home,
    }
}

impl Server {
    fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self
            .client
            .get(format!("{}{path}", self.base))
            .send()
            .unwrap();
        let status = r.status();
        (status, r.json().unwrap_or(Value::Null))
    }

    fn post(&self, path: &str, body: &Value, key: Option<&str>) -> (StatusCode, Value) {
        let mut req = self.client.post(format!("{}{path}", self.base)).json(body);
        if let Some(k) = key {
            req = req.header(api::IDEMPOTENCY_HEADER, k);
        }
        let r = req.send().unwrap();
        let status = r.status();
        (status, r.json().unwrap_or(Value::Null))
    }

    /// Raw SSE body; the server closes the stream after the terminal event.
    fn events(&self, id: &str, last_event_id: Option<u64>) -> String {
        let mut req = self
            .client
            .get(format!("{}/engagements/{id}/events", self.base));
        if let Some(n) = last_event_id {
            req = req.header("Last-Event-ID", n.to_string());
        }
        let r = req.send().unwrap();
        assert_eq!(r.status(), StatusCode::OK);
        r.text().unwrap()
    }
}

fn sse_records(body: &str) -> Vec<(String, u64, Value)> {
    body.split("\n\n")
        .filter_map(|block| {
            let mut event = None;
            let mut id = None;
            let mut data = None;
            for line in block.lines() {
                if let Some(v) = line
                    .strip_prefix("event: ")
                    .or_else(|| line.strip_prefix("event:"))
                {
                    event = Some(v.trim().to_string());
                } else if let Some(v) = line
                    .strip_prefix("id: ")
                    .or_else(|| line.strip_prefix("id:"))
                {
                    id = v.trim().parse().ok();
                } else if let Some(v) = line
                    .strip_prefix("data: ")
                    .or_else(|| line.strip_prefix("data:"))
                {
                    data = serde_json::from_str(v.trim()).ok();
                }
            }
            Some((event?, id?, data?))
        })
        .collect()
}

fn nvda_buffett() -> Value {
    json!({"ticker": "NVDA", "persona_id": "buffett", "workflow_id": "pitch-memo"})
}

#[test]
fn create_returns_202_and_streams_to_completion() {
    let s = start(false);
    let (status, body) = s.post("/engagements", &nvda_buffett(), None);
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    let id = body["engagement_id"].as_str().unwrap().to_string();
    assert_eq!(body["tasks"].as_array().unwrap().len(), 10);

    let records = sse_records(&s.events(&id, None));
    let seqs: Vec<u64> = records.iter().map(|r| r.1).collect();
    assert_eq!(seqs, (1..=records.len() as u64).collect::<Vec<_>>());
    assert_eq!(records.last().unwrap().0, "engagement_done");
    assert_eq!(records.iter().filter(|r| r.0 == "task_done").count(), 10);
    for (_, seq, data) in &records {
        assert_eq!(data["engagement_id"], id.as_str());
        assert_eq!(data["sequence_no"], *seq);
    }

    let (status, eng) = s.get(&format!("/engagements/{id}"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(eng["running"], false);
    assert!(eng["graph"]["tasks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|t| t["status"] == "done"));
}

#[test]
fn reconnect_resumes_after_last_event_id_and_clients_agree() {
    let s = start(false);
    let (_, body) = s.post("/engagements", &nvda_buffett(), None);
    let id = body["engagement_id"].as_str().unwrap().to_string();
    let a = s.events(&id, None);
    let b = s.events(&id, None);
    assert_eq!(a, b);
    let full = sse_records(&a);
    let tail = sse_records(&s.events(&id, Some(5)));
    assert_eq!(tail.first().unwrap().1, 6);
    assert_eq!(tail, full[5..].to_vec());
}

#[test]
fn unknown_persona_workflow_and_ticker_are_400() {
    let s = start(false);
    for (body, tag) in [
        (
            json!({"ticker": "NVDA", "persona_id": "nobody", "workflow_id": "pitch-memo"}),
            "unknown-persona",
        ),
        (
            json!({"ticker": "NVDA", "persona_id": "buffett", "workflow_id": "nope"}),
            "unknown-workflow",
        ),
        (
            json!({"ticker": "ZZZZ", "persona_id": "buffett", "workflow_id": "pitch-memo"}),
            "unknown-ticker",
        ),
    ] {
        let (status, err) = s.post("/engagements", &body, None);
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(err["error"], tag);
    }
}

#[test]
fn idempotency_key_replays_or_conflicts() {
    let s = start(false);
    let (s1, a) = s.post("/engagements", &nvda_buffett(), Some("k-1"));
    let (s2, b) = s.post("/engagements", &nvda_buffett(), Some("k-1"));
    assert_eq!((s1, s2), (StatusCode::ACCEPTED, StatusCode::ACCEPTED));
    assert_eq!(a["engagement_id"], b["engagement_id"]);
    let other = json!({"ticker": "NVDA", "persona_id": "generic", "workflow_id": "pitch-memo"});
    let (s3, c) = s.post("/engagements", &other, Some("k-1"));
    assert_eq!(s3, StatusCode::CONFLICT);
    assert_eq!(c["error"], "idempotency-conflict");
    let (_, list) = s.get("/engagements");
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[test]
fn unknown_ids_are_404() {
    let s = start(false);
    for path in [
        "/engagements/eng-9999-0000000000",
        "/engagements/eng-9999-0000000000/events",
        "/artifacts/deadbeef",
        "/memos/deadbeef",
        "/graph/themes/nothing",
        "/graph/tickers/ZZZZ/compare",
    ] {
        assert_eq!(s.get(path).0, StatusCode::NOT_FOUND, "{path}");
    }
}

#[test]
fn empty_graph_and_library_listings() {
    let s = start(false);
    let (_, g) = s.get("/graph");
    assert_eq!(g["nodes"], json!([]));
    assert_eq!(g["edges"], json!([]));

    let (_, skills) = s.get("/skills");
    let groups = skills.as_array().unwrap();
    let order = ["setup", "ingest", "analyze", "compose", "maintain"];
    let ranks: Vec<usize> = groups
        .iter()
        .map(|g| order.iter().position(|p| *p == g["phase"]).unwrap())
        .collect();
    assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "{ranks:?}");
    let labels: std::collections::BTreeMap<&str, &str> = groups
        .iter()
        .map(|g| {
            (
                g["phase"].as_str().unwrap(),
                g["ui_phase"].as_str().unwrap(),
            )
        })
        .collect();
    assert_eq!(labels["setup"], "Planner");
    assert_eq!(labels["compose"], "Memo");
    for g in groups {
        for skill in g["skills"].as_array().unwrap() {
            assert_eq!(skill["phase"], g["phase"]);
            assert_eq!(skill["runner"], g["runner"]);
        }
    }
    let runners: std::collections::BTreeSet<&str> = groups
        .iter()
        .map(|g| g["runner"].as_str().unwrap())
        .collect();
    assert_eq!(runners.len(), 3);

    let (_, personas) = s.get("/personas");
    let ids: Vec<&str> = personas
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["id"].as_str().unwrap())
        .collect();
    assert!(ids.contains(&"buffett") && ids.contains(&"generic"));

    let (_, wfs) = s.get("/workflows");
    let buffett_pitch = wfs
        .as_array()
        .unwrap()
        .iter()
        .find(|w| w["id"] == "buffett-pitch")
        .unwrap();
    assert_eq!(buffett_pitch["personas"], json!(["buffett"]));

    let (_, sources) = s.get("/data-sources");
    let filings = sources
        .as_array()
        .unwrap()
        .iter()
        .find(|d| d["skill"] == "fetch_filings")
        .unwrap();
    assert_eq!(filings["modes"], json!(["fixture", "live"]));
    assert!(filings["fixture_tickers"]
        .as_array()
        .unwrap()
        .contains(&json!("NVDA")));
}

#[test]
fn graph_queries_over_the_memo_fixture() {
    let s = start(true);
    let (_, gaps) = s.get("/graph/gaps");
    assert_eq!(gaps.as_array().unwrap().len(), 1);
    assert_eq!(gaps[0]["ticker"], "NVDA");
    let (status, theme) = s.get("/graph/themes/AI%20Infra%20Spending");
    assert_eq!(status, StatusCode::OK);
    assert_eq!(theme["tickers"].as_array().unwrap().len(), 2);
    let (_, rows) = s.get("/graph/tickers/aapl/compare");
    assert_eq!(rows.as_array().unwrap().len(), 2);
    let a = s.get("/graph");
    let b = s.get("/graph");
    assert_eq!(a, b);
}

#[test]
fn artifact_and_memo_views_resolve_lineage_and_citations() {
    let s = start(false);
    let req = s.pod.request("NVDA", "buffett", "buffett-pitch").unwrap();
    let (_, result) = s.pod.run(&req, &Default::default()).unwrap();
    let memo = s.pod.memo_of(&result).unwrap();

    let (status, art) = s.get(&format!("/artifacts/{memo}"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(art["artifact"]["category"], "memo");
    assert_eq!(art["memo"]["verdict"], "Pass");
    let lineage = art["lineage"].as_array().unwrap();
    assert!(lineage.iter().any(|e| e["category"] == "filings"));

    let (_, view) = s.get(&format!("/memos/{memo}"));
    let cites = view["citations"].as_array().unwrap();
    assert!(!cites.is_empty());
    assert!(cites.iter().all(|c| c["category"] != "unresolved"));
}

#[test]
fn onboarding_a_pack_over_http() {
    let s = start(false);
    let mut manifest: Value = serde_json::from_str(
        &std::fs::read_to_string(default_assets_dir().join("packs/buffett/pack.json")).unwrap(),
    )
    .unwrap();
    manifest["id"] = json!("buffett-copy");
    manifest["skills"][0]["id"] = json!("buffett_copy_analysis");
    let (status, pack) = s.post("/personas", &manifest, None);
    assert_eq!(status, StatusCode::CREATED, "{pack}");
    assert_eq!(pack["skills"], json!(["buffett_copy_analysis"]));
    let (_, personas) = s.get("/personas");
    assert!(personas
        .as_array()
        .unwrap()
        .iter()
        .any(|p| p["id"] == "buffett-copy"));
    let (status, _) = s.post("/personas", &manifest, None);
    assert_eq!(status, StatusCode::BAD_REQUEST);
}
