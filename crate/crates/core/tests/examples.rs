//! Runs the shipped examples. `cargo test` builds them next to the test
//! binaries, under `target/<profile>/examples`.

use std::path::PathBuf;
use std::process::Command;

fn example(name: &str) -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let path = profile_dir
        .join("examples")
        .join(format!("{name}{}", std::env::consts::EXE_SUFFIX));
    assert!(
        path.is_file(),
        "{} not built; run through `cargo test`",
        path.display()
    );
    path
}

fn run(name: &str) -> String {
    let out = Command::new(example(name))
        .env_remove("EDGAR_USER_AGENT")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        out.status.success(),
        "{name} failed\nstdout:\n{stdout}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

#[test]
fn pitch_memo() {
    let out = run("pitch_memo");
    assert!(out.contains("verdict: Pass"));
    assert!(out.contains("## 8-Question Filter"));
}

#[test]
fn dual_persona_contrast() {
    let out = run("dual_persona_contrast");
    assert!(out.contains("== compare NVDA"));
    assert!(out.contains("Circle of Competence"));
}

#[test]
fn plan_dag() {
    assert!(run("plan_dag").starts_with("10 tasks for template pitch-memo"));
}

#[test]
fn resume_engagement() {
    let out = run("resume_engagement");
    assert!(out.contains("first pass: Halted"));
    assert!(out.contains("engagement_done"));
}

#[test]
fn knowledge_graph() {
    let out = run("knowledge_graph");
    assert!(out.contains("NVDA only covered by quant"));
}

#[test]
fn distill_persona() {
    let out = run("distill_persona");
    assert!(out.contains("provider calls: 1"));
    assert!(out.contains("provider calls 0"));
}

#[test]
fn onboard_pack() {
    let out = run("onboard_pack");
    assert!(out.contains("8-Question Filter -> buffett-quick-filter"));
    assert!(out.contains("workflow: buffett-sell-check"));
}

#[test]
fn evidence_audit() {
    let out = run("evidence_audit");
    assert!(out.contains(", 0 findings"));
    assert!(out.contains("after flip: 1 findings"));
}

#[test]
fn serve_api() {
    let out = run("serve_api");
    assert!(out.contains("\"engagement_done\""));
}

#[test]
fn edgar_live_without_agent_is_a_no_op() {
    assert!(run("edgar_live").is_empty());
}
