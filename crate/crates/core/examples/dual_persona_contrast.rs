//! Same ticker, two personas: the generic pitch and the Buffett pitch side by
//! side, then the per-ticker comparison from the research graph.

use analyst_pod::pod::{Pod, PodConfig, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let home = tempfile::tempdir()?;
    let pod = Pod::open(PodConfig::new(home.path()).seed(Some(7)))?;

    for (persona, workflow) in [("generic", "pitch-memo"), ("buffett", "buffett-pitch")] {
        let (_, result) = pod.run(
            &pod.request("NVDA", persona, workflow)?,
            &RunOptions::default(),
        )?;
        let memo = pod
            .memo(pod.memo_of(&result).ok_or("no memo")?.as_str())?
            .memo;
        println!("== {persona} / {workflow}");
        println!("verdict: {}", memo.verdict.as_deref().unwrap_or("(none)"));
        for s in &memo.sections {
            println!("  - {}", s.title);
        }
    }

    println!("\n== compare NVDA");
    for row in pod.research_graph().compare_views("NVDA")? {
        println!(
            "{:<10} {:<14} {:<6} {}",
            row.persona,
            row.workflow,
            row.verdict.as_deref().unwrap_or("-"),
            row.title
        );
    }
    Ok(())
}
