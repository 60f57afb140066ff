use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pod(home: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pod"))
        .args(args)
        .env("POD_HOME", home)
        .env_remove("POD_SEED")
        .env_remove("POD_PROVIDER")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixtures() -> String {
    analyst_pod::pod::default_assets_dir()
        .join("fixtures")
        .display()
        .to_string()
}

#[test]
fn run_prints_id_ten_task_events_and_memo() {
    let home = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let o = pod(
        home.path(),
        &[
            "run",
            "--ticker",
            "NVDA",
            "--persona",
            "buffett",
            "--workflow",
            "buffett-pitch",
            "--fixtures",
            &fx,
            "--seed",
            "7",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("engagement eng-0001-"));
    assert_eq!(lines.iter().filter(|l| l.contains("task_done")).count(), 10);
    let memo = lines.last().unwrap().strip_prefix("memo ").unwrap();

    let shown = pod(home.path(), &["memo", "show", memo, "--with-sources"]);
    assert!(shown.status.success());
    let body = stdout(&shown);
    assert!(body.contains("## 8-Question Filter"));
    assert!(body.contains("Resolved citations:"));
    assert!(!body.contains("unresolved"));

    let v = pod(home.path(), &["store", "verify"]);
    assert!(v.status.success());
    assert!(stdout(&v).starts_with("OK, 0 findings"));
}

#[test]
fn follow_prints_every_event_and_json_is_structured() {
    let home = tempfile::tempdir().unwrap();
    let o = pod(
        home.path(),
        &[
            "run",
            "--ticker",
            "NVDA",
            "--persona",
            "generic",
            "--workflow",
            "pitch-memo",
            "--follow",
        ],
    );
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("task_started"));
    assert!(text.contains("engagement_done"));

    let j = pod(
        home.path(),
        &[
            "--json",
            "run",
            "--ticker",
            "NVDA",
            "--persona",
            "generic",
            "--workflow",
            "pitch-memo",
        ],
    );
    let v: Value = serde_json::from_str(&stdout(&j)).unwrap();
    assert_eq!(v["outcome"], "done");
    assert!(v["memo"].is_string());
    assert!(v["engagement_id"]
        .as_str()
        .unwrap()
        .starts_with("eng-0002-"));
}

#[test]
fn errors_are_one_parsable_line_with_distinct_codes() {
    let home = tempfile::tempdir().unwrap();
    let o = pod(
        home.path(),
        &[
            "run",
            "--ticker",
            "NVDA",
            "--persona",
            "nobody",
            "--workflow",
            "pitch-memo",
        ],
    );
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(stderr(&o).trim(), "error: unknown-persona: nobody");

    let o = pod(home.path(), &["memo", "show", "deadbeef"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error: unknown-artifact:"));

    let o = pod(home.path(), &["--json", "resume", "eng-0009-0000000000"]);
    assert_eq!(o.status.code(), Some(3));
    let v: Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(v["error"], "unknown-engagement");

    let o = pod(home.path(), &["run", "--ticker", "NVDA"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn graph_commands_over_the_memo_fixture() {
    let home = tempfile::tempdir().unwrap();
    assert!(pod(home.path(), &["graph", "seed"]).status.success());
    let gaps = pod(home.path(), &["graph", "gaps"]);
    assert_eq!(stdout(&gaps).trim(), "NVDA  only quant");

    let theme = stdout(&pod(home.path(), &["graph", "theme", "ai infra spending"]));
    assert!(theme.contains("MSFT, NVDA"), "{theme}");

    let cmp = stdout(&pod(home.path(), &["graph", "compare", "aapl"]));
    assert_eq!(cmp.lines().count(), 3);

    let out = home.path().join("graph.json");
    let e = pod(
        home.path(),
        &["graph", "export", "--out", out.to_str().unwrap()],
    );
    assert!(e.status.success());
    let g: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(g["nodes"].as_array().unwrap().len(), 12);
}

#[test]
fn corrupted_store_fails_verification() {
    let home = tempfile::tempdir().unwrap();
    assert!(pod(home.path(), &["graph", "seed"]).status.success());
    let objects = walk(&home.path().join("store").join("objects"));
    assert!(!objects.is_empty(), "fixture memos are stored out of line");
    let mut bytes = std::fs::read(&objects[0]).unwrap();
    let i = bytes.iter().position(|b| b.is_ascii_alphabetic()).unwrap();
    bytes[i] ^= 0x01;
    std::fs::write(&objects[0], bytes).unwrap();

    let v = pod(home.path(), &["store", "verify"]);
    assert_eq!(v.status.code(), Some(7));
    assert!(stderr(&v).starts_with("error: integrity-findings:"));
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap().flatten() {
        let p = e.path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn distill_then_onboard_then_run() {
    let home = tempfile::tempdir().unwrap();
    let corpus = analyst_pod::pod::default_assets_dir().join("corpora/buffett");
    let out = home.path().join("distilled");
    let d = pod(
        home.path(),
        &[
            "--json",
            "persona",
            "distill",
            "--corpus",
            corpus.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert!(d.status.success(), "{}", stderr(&d));
    let v: Value = serde_json::from_str(&stdout(&d)).unwrap();
    assert_eq!(v["provider_calls"], 1);
    assert_eq!(v["persona_id"], "buffett-distilled");

    let o = pod(home.path(), &["persona", "onboard", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let listed = stdout(&pod(home.path(), &["personas", "list"]));
    assert!(listed.contains("buffett-distilled"));

    let r = pod(
        home.path(),
        &[
            "run",
            "--ticker",
            "NVDA",
            "--persona",
            "buffett-distilled",
            "--workflow",
            "buffett-sell-check",
        ],
    );
    assert!(r.status.success(), "{}", stderr(&r));
}

#[test]
fn listings_render_tables() {
    let home = tempfile::tempdir().unwrap();
    let skills = stdout(&pod(home.path(), &["skills", "list"]));
    assert!(skills.starts_with("PHASE"));
    assert!(skills.contains("extract_KPIs"));
    let wf = stdout(&pod(home.path(), &["workflows", "list"]));
    assert!(wf.contains("buffett-sell-check"));
    let data = stdout(&pod(home.path(), &["--json", "data", "list"]));
    let v: Value = serde_json::from_str(&data).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 3);
}
