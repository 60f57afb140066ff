//! Derives a task graph from skill contracts without running it, and prints
//! it by phase together with its typed edges.

use analyst_pod::planner::EngagementRequest;
use analyst_pod::pod::{Pod, PodConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let workflow = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "pitch-memo".into());
    let home = tempfile::tempdir()?;
    let pod = Pod::open(PodConfig::new(home.path()))?;
    let request: EngagementRequest = pod.request("NVDA", "generic", &workflow)?;
    let (_, graph) = pod.create_engagement(&request)?;

    println!(
        "{} tasks for template {}",
        graph.tasks.len(),
        graph.template_id
    );
    let mut tasks = graph.tasks.clone();
    tasks.sort_by_key(|t| (t.phase, t.id.clone()));
    for t in &tasks {
        println!(
            "  {:<9} {:<18} {}",
            t.phase.as_str(),
            t.id,
            t.runner.as_str()
        );
    }
    println!("edges:");
    for e in &graph.edges {
        println!("  {} -> {} ({})", e.from, e.to, e.category);
    }
    for w in &graph.warnings {
        println!("note: {w}");
    }
    Ok(())
}
