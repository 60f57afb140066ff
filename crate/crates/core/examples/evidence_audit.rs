//! Audits a finished engagement: resolves every memo citation, walks the
//! lineage down to the raw filing, verifies the store on disk, then corrupts
//! one byte and verifies again.

use analyst_pod::pod::{Pod, PodConfig, RunOptions};
use analyst_pod::store::verify_dir;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let home = tempfile::tempdir()?;
    let pod = Pod::open(PodConfig::new(home.path()).seed(Some(7)))?;
    let (_, result) = pod.run(
        &pod.request("NVDA", "buffett", "buffett-pitch")?,
        &RunOptions::default(),
    )?;
    let memo = pod.memo_of(&result).ok_or("no memo")?;

    println!("citations in memo {}:", memo.short());
    for c in pod.memo(memo.as_str())?.citations {
        println!(
            "  {} {:<16} {:<16} {}",
            c.id.short(),
            c.category,
            c.producer,
            c.excerpt
        );
    }
    println!("\nlineage:");
    for step in pod.artifact(memo.as_str())?.lineage {
        println!(
            "  {}{} {}",
            "  ".repeat(step.depth),
            step.id.short(),
            step.category
        );
    }

    let store_dir = home.path().join("store");
    let report = verify_dir(&store_dir);
    println!(
        "\npristine: {} checked, {} findings",
        report.checked,
        report.findings.len()
    );

    let object = walk(&store_dir.join("objects")).ok_or("no payload files")?;
    let mut bytes = std::fs::read(&object)?;
    bytes[0] ^= 0x20;
    std::fs::write(&object, bytes)?;
    let report = verify_dir(&store_dir);
    println!("after flip: {} findings", report.findings.len());
    for f in report.findings {
        println!("  {f:?}");
    }
    Ok(())
}

fn walk(dir: &std::path::Path) -> Option<std::path::PathBuf> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .ok()?
        .flatten()
        .map(|e| e.path())
        .collect();
    entries.sort();
    entries
        .into_iter()
        .find_map(|p| if p.is_file() { Some(p) } else { walk(&p) })
}
