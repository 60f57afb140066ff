//! Runs one engagement end to end and prints the memo.
//!
//! `cargo run --example pitch_memo -- NVDA buffett buffett-pitch`

use analyst_pod::pod::{Pod, PodConfig, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let ticker = args.next().unwrap_or_else(|| "NVDA".into());
    let persona = args.next().unwrap_or_else(|| "buffett".into());
    let workflow = args.next().unwrap_or_else(|| "buffett-pitch".into());

    let home = tempfile::tempdir()?;
    let pod = Pod::open(PodConfig::new(home.path()).seed(Some(7)))?;
    let request = pod.request(&ticker, &persona, &workflow)?;
    let (record, result) = pod.run(&request, &RunOptions::default())?;

    println!("engagement {} finished: {:?}", record.id, result.outcome);
    for (task, status) in &result.statuses {
        println!("  {task:<18} {status}");
    }
    let Some(memo) = pod.memo_of(&result) else {
        println!("no memo was produced");
        return Ok(());
    };
    let view = pod.memo(memo.as_str())?;
    println!("\n{}", view.memo.to_markdown());
    Ok(())
}
