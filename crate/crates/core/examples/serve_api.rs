//! Starts the HTTP API on a loopback port, posts an engagement and follows
//! its event stream until the engagement finishes.

use std::io::{BufRead, BufReader};
use std::sync::{mpsc, Arc};

use analyst_pod::api;
use analyst_pod::pod::{Pod, PodConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let home = tempfile::tempdir()?;
    let pod = Arc::new(Pod::open(PodConfig::new(home.path()).seed(Some(7)))?);

    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().expect("runtime");
        rt.block_on(api::serve(
            pod,
            "127.0.0.1:0".parse().unwrap(),
            move |addr| {
                tx.send(addr).unwrap();
            },
        ))
        .expect("server");
    });
    let base = format!("http://{}", rx.recv()?);
    println!("listening on {base}");

    let client = reqwest::blocking::Client::new();
    let created: serde_json::Value = client
        .post(format!("{base}/engagements"))
        .json(&serde_json::json!({"ticker": "NVDA", "persona_id": "buffett", "workflow_id": "buffett-pitch"}))
        .send()?
        .json()?;
    let id = created["engagement_id"]
        .as_str()
        .ok_or("no id")?
        .to_string();
    println!(
        "created {id} with {} tasks",
        created["tasks"].as_array().map_or(0, Vec::len)
    );

    let stream = client
        .get(format!("{base}/engagements/{id}/events"))
        .send()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if let Some(data) = line.strip_prefix("data:") {
            let e: serde_json::Value = serde_json::from_str(data.trim())?;
            println!(
                "  #{} {} {}",
                e["sequence_no"],
                e["event"],
                e["task_id"].as_str().unwrap_or("")
            );
            if e["event"]
                .as_str()
                .is_some_and(|k| k.starts_with("engagement_"))
            {
                break;
            }
        }
    }

    let gaps: serde_json::Value = client.get(format!("{base}/graph/gaps")).send()?.json()?;
    println!("gap report: {gaps}");
    Ok(())
}
