//! Stops an engagement after the ingest phase, reopens the pod as a new
//! process would, and resumes. Finished tasks are not run again.

use std::sync::Arc;

use analyst_pod::category::Phase;
use analyst_pod::dispatcher::Probe;
use analyst_pod::pod::{Pod, PodConfig, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let home = tempfile::tempdir()?;
    let id = {
        let pod = Pod::open(PodConfig::new(home.path()).seed(Some(7)))?;
        let (record, _) =
            pod.create_engagement(&pod.request("NVDA", "buffett", "buffett-pitch")?)?;
        let probe = Arc::new(Probe::new());
        let halted = pod.execute(
            &record.id,
            &RunOptions {
                halt_after_phase: Some(Phase::Ingest),
                probe: Some(Arc::clone(&probe)),
                ..Default::default()
            },
        )?;
        println!(
            "first pass: {:?}, ran {:?}",
            halted.outcome,
            probe.invoked_tasks()
        );
        record.id
    };

    let pod = Pod::open(PodConfig::new(home.path()).seed(Some(7)))?;
    let probe = Arc::new(Probe::new());
    let done = pod.resume(
        &id,
        &RunOptions {
            probe: Some(Arc::clone(&probe)),
            ..Default::default()
        },
    )?;
    println!(
        "resume:     {:?}, ran {:?}",
        done.outcome,
        probe.invoked_tasks()
    );
    println!("\nevent log:");
    for e in pod.event_log(&id)?.events() {
        println!(
            "  #{:<3} {:<20} {}",
            e.sequence_no,
            e.event.as_str(),
            e.task_id.unwrap_or_default()
        );
    }
    Ok(())
}
