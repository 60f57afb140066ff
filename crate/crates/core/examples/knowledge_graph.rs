//! Seeds the four-memo fixture, rebuilds the research graph and runs the
//! graph queries: coverage gaps, a theme view, a ticker comparison and a
//! provenance trail.

use std::sync::Arc;

use analyst_pod::clock::Clock;
use analyst_pod::graph::{seed_memo_fixture, NodeKind, ResearchGraph};
use analyst_pod::pod::default_assets_dir;
use analyst_pod::store::EvidenceStore;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = EvidenceStore::in_memory(Arc::new(Clock::logical()));
    let memos = seed_memo_fixture(&store, &default_assets_dir().join("graph-fixture"))?;
    let graph = ResearchGraph::rebuild(&store);

    for kind in [
        NodeKind::Ticker,
        NodeKind::Memo,
        NodeKind::Analyst,
        NodeKind::Theme,
    ] {
        println!("{:<8} {}", kind.as_str(), graph.count(kind));
    }
    println!("edges    {}", graph.edges.len());

    println!("\ncoverage gaps:");
    for row in graph.gap_report() {
        println!(
            "  {} only covered by {}",
            row.ticker,
            row.personas.join(", ")
        );
    }

    let theme = graph.theme_view("AI Infra Spending")?;
    println!(
        "\ntheme {}: tickers {:?}, analysts {:?}",
        theme.display, theme.tickers, theme.analysts
    );

    println!("\nviews on MSFT:");
    for row in graph.compare_views("MSFT")? {
        println!("  {:<6} {}", row.persona, row.title);
    }

    println!("\nprovenance of memo D:");
    for step in graph.provenance_chain(&store, memos["D"].as_str())? {
        println!(
            "  {}{} {} ({})",
            "  ".repeat(step.depth),
            step.id.short(),
            step.category,
            step.producer
        );
    }
    Ok(())
}
