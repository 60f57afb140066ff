//! Distills a persona pack from a document corpus, then edits the persona
//! document and recompiles without another model call.

use analyst_pod::distill::{Distiller, SourceCorpus};
use analyst_pod::pod::{default_assets_dir, Pod, PodConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus_dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| default_assets_dir().join("corpora/buffett"));
    let work = tempfile::tempdir()?;
    let pod = Pod::open(PodConfig::new(work.path().join("home")).seed(Some(7)))?;

    let run = pod.distill(&corpus_dir, &work.path().join("pack"))?;
    println!("persona {} -> skill {}", run.manifest.id, run.skill_spec.id);
    println!("provider calls: {}", run.provider_calls);
    println!(
        "workflows: {:?}",
        run.manifest
            .workflows
            .iter()
            .map(|w| &w.template_id)
            .collect::<Vec<_>>()
    );
    println!("\n{}", run.persona_document.to_markdown());

    let (_, bundle) = SourceCorpus::load_dir(&corpus_dir)?;
    let bundle = bundle.ok_or("corpus manifest has no persona block")?;
    let distiller = Distiller::new(pod.store(), pod.catalog(), "distill-edit");
    let mut edited = run.persona_document.clone();
    edited
        .communication_style
        .push_str(" I end every note with the one number that matters most.");
    let revised = distiller.revise_persona(&run.persona, &edited)?;
    let again = distiller.from_persona(&edited, Some(&revised), &bundle)?;
    println!(
        "recompiled after edit: spec {} (provider calls {})",
        again.spec.short(),
        again.provider_calls
    );
    let lineage = pod.store().lineage(&again.pack)?;
    println!("pack lineage reaches {} artifacts", lineage.nodes.len());
    Ok(())
}
