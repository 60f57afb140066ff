//! Onboards an external persona pack and runs one of its workflows.
//!
//! `cargo run --example onboard_pack -- path/to/pack-dir`; without an
//! argument the shipped Buffett pack is loaded into a fresh registry.

use analyst_pod::pod::{default_assets_dir, Pod, PodConfig, RunOptions};
use analyst_pod::registry::{load_pack_dir, Registry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| default_assets_dir().join("packs/buffett"));

    let mut registry = Registry::new();
    registry.register_skill_dir(&default_assets_dir().join("skills"))?;
    let (record, skills) = registry.onboard_persona_pack(load_pack_dir(&dir)?)?;
    println!("id:               {}", record.id);
    println!("name:             {}", record.name);
    println!("title:            {}", record.title);
    println!("default template: {}", record.default_template);
    for w in &record.workflows {
        println!("workflow:         {} -> {}", w.name, w.template_id);
    }
    println!("skills:           {}", skills.join(", "));

    let home = tempfile::tempdir()?;
    let pod = Pod::open(PodConfig::new(home.path()).seed(Some(7)))?;
    let persona = if pod.registry().persona(&record.id).is_some() {
        record.clone()
    } else {
        pod.onboard_dir(&dir)?
    };
    let workflow = persona
        .workflows
        .last()
        .map(|w| w.template_id.clone())
        .unwrap_or(persona.default_template);
    let (_, result) = pod.run(
        &pod.request("NVDA", &persona.id, &workflow)?,
        &RunOptions::default(),
    )?;
    if let Some(memo) = pod.memo_of(&result) {
        println!("\n{}", pod.memo(memo.as_str())?.memo.to_markdown());
    }
    Ok(())
}
