//! Skills adapter: maps externally authored persona packs onto the registry contract.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    join_violations, validate_pack, validate_spec, PersonaPack, Registry, RegistryError, SkillSpec,
    WorkflowRef,
};
use crate::category::Phase;

/// A pack as its authors ship it: the persona record fields plus full skill specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackManifest {
    pub id: String,
    pub name: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector_hint: Option<String>,
    pub voice: String,
    pub default_template: String,
    pub workflows: Vec<WorkflowRef>,
    #[serde(default)]
    pub config: serde_json::Map<String, serde_json::Value>,
    pub skills: Vec<SkillSpec>,
}

fn io_err(path: &Path, source: std::io::Error) -> RegistryError {
    RegistryError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn sorted_entries(dir: &Path, ext: &str) -> Result<Vec<std::path::PathBuf>, RegistryError> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|x| x.to_str()) == Some(ext))
        .collect();
    files.sort();
    Ok(files)
}

/// Reads `pack.json` and attaches every `references/*.md` note verbatim to
/// each skill body.
pub fn load_pack_dir(dir: &Path) -> Result<PackManifest, RegistryError> {
    let path = dir.join("pack.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let mut manifest: PackManifest = serde_json::from_str(&text)
        .map_err(|e| RegistryError::MalformedManifest(format!("{}: {e}", path.display())))?;
    let refs = dir.join("references");
    if refs.is_dir() {
        let mut notes = BTreeMap::new();
        for file in sorted_entries(&refs, "md")? {
            let body = fs::read_to_string(&file).map_err(|e| io_err(&file, e))?;
            let name = file.file_name().unwrap().to_string_lossy().into_owned();
            notes.insert(name, body);
        }
        for skill in &mut manifest.skills {
            skill.attachments.extend(notes.clone());
        }
    }
    Ok(manifest)
}

/// Parses every `*.json` skill manifest in `dir`, ordered by file name.
pub fn load_skill_dir(dir: &Path) -> Result<Vec<SkillSpec>, RegistryError> {
    sorted_entries(dir, "json")?
        .into_iter()
        .map(|file| {
            let text = fs::read_to_string(&file).map_err(|e| io_err(&file, e))?;
            serde_json::from_str(&text)
                .map_err(|e| RegistryError::MalformedManifest(format!("{}: {e}", file.display())))
        })
        .collect()
}

pub(super) fn onboard(
    registry: &mut Registry,
    manifest: PackManifest,
) -> Result<(PersonaPack, Vec<String>), RegistryError> {
    if manifest.skills.is_empty() {
        return Err(RegistryError::MalformedManifest(format!(
            "pack `{}` declares no skills",
            manifest.id
        )));
    }
    if registry.persona(&manifest.id).is_some() {
        return Err(RegistryError::DuplicateId(manifest.id));
    }

    let mut seen = BTreeSet::new();
    let mut skills = Vec::with_capacity(manifest.skills.len());
    for mut spec in manifest.skills {
        if spec.phase != Phase::Compose {
            return Err(RegistryError::MalformedManifest(format!(
                "skill `{}` declares phase {}; persona packs contribute compose-phase skills",
                spec.id, spec.phase
            )));
        }
        match &spec.owner_persona {
            Some(owner) if owner != &manifest.id => {
                return Err(RegistryError::MalformedManifest(format!(
                    "skill `{}` is owned by `{owner}`, not `{}`",
                    spec.id, manifest.id
                )))
            }
            _ => spec.owner_persona = Some(manifest.id.clone()),
        }
        let violations = validate_spec(&spec);
        if !violations.is_empty() {
            return Err(RegistryError::MalformedManifest(format!(
                "skill `{}`: {}",
                spec.id,
                join_violations(&violations)
            )));
        }
        if !seen.insert(spec.id.clone()) || registry.get_skill(&spec.id).is_some() {
            return Err(RegistryError::DuplicateId(spec.id));
        }
        skills.push(spec);
    }

    let in_pack: BTreeSet<_> = skills
        .iter()
        .flat_map(|s| s.produces.iter().cloned())
        .collect();
    for spec in &skills {
        let missing: Vec<String> = spec
            .needs
            .iter()
            .filter(|c| !c.is_optional())
            .filter(|c| !in_pack.contains(*c) && registry.producers_of(c.as_str()).is_empty())
            .map(|c| c.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(RegistryError::UnresolvableNeed {
                skill: spec.id.clone(),
                categories: missing,
            });
        }
    }

    let pack = PersonaPack {
        id: manifest.id,
        name: manifest.name,
        title: manifest.title,
        sector_hint: manifest.sector_hint,
        voice: manifest.voice,
        skills: skills.iter().map(|s| s.id.clone()).collect(),
        default_template: manifest.default_template,
        workflows: manifest.workflows,
        config: manifest.config,
    };
    let violations = validate_pack(&pack);
    if !violations.is_empty() {
        return Err(RegistryError::MalformedManifest(join_violations(
            &violations,
        )));
    }

    let mut ids = Vec::with_capacity(skills.len());
    for spec in skills {
        ids.push(registry.register_skill(spec)?);
    }
    registry.register_persona(pack.clone())?;
    Ok((pack, ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::RunnerKind;

    fn base_registry() -> Registry {
        let mut r = Registry::new();
        for (id, phase, needs, produces) in [
            (
                "coverage_brief",
                Phase::Setup,
                vec![],
                vec!["coverage_brief"],
            ),
            (
                "fetch_filings",
                Phase::Ingest,
                vec!["coverage_brief"],
                vec!["filings"],
            ),
        ] {
            r.register_skill(
                SkillSpec::new(id, phase, RunnerKind::Deterministic)
                    .needs(&needs)
                    .produces(&produces),
            )
            .unwrap();
        }
        r
    }

    fn manifest(skills: Vec<SkillSpec>) -> PackManifest {
        PackManifest {
            id: "value".into(),
            name: "Value".into(),
            title: "Value Investor".into(),
            sector_hint: None,
            voice: "plain".into(),
            default_template: "pitch-memo".into(),
            workflows: vec![WorkflowRef {
                name: "Pitch".into(),
                template_id: "pitch-memo".into(),
                description: String::new(),
            }],
            config: Default::default(),
            skills,
        }
    }

    fn agent(id: &str, needs: &[&str]) -> SkillSpec {
        SkillSpec::new(id, Phase::Compose, RunnerKind::Agent)
            .needs(needs)
            .produces(&["persona_view"])
    }

    #[test]
    fn onboarding_registers_owned_compose_skills() {
        let mut r = base_registry();
        let (pack, ids) = r
            .onboard_persona_pack(manifest(vec![agent("value", &["filings", "transcripts"])]))
            .unwrap();
        assert_eq!(ids, vec!["value"]);
        assert_eq!(pack.skills, vec!["value"]);
        assert_eq!(
            r.get_skill("value").unwrap().owner_persona.as_deref(),
            Some("value")
        );
        assert!(r.persona("value").is_some());
    }

    #[test]
    fn unresolvable_need_names_categories() {
        let mut r = base_registry();
        let err = r
            .onboard_persona_pack(manifest(vec![agent("value", &["satellite_imagery"])]))
            .unwrap_err();
        match err {
            RegistryError::UnresolvableNeed { categories, .. } => {
                assert_eq!(categories, vec!["satellite_imagery"])
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(r.get_skill("value").is_none());
    }

    #[test]
    fn zero_skills_is_malformed() {
        let mut r = base_registry();
        assert!(matches!(
            r.onboard_persona_pack(manifest(vec![])),
            Err(RegistryError::MalformedManifest(_))
        ));
    }

    #[test]
    fn need_satisfied_inside_pack() {
        let mut r = base_registry();
        let helper = SkillSpec::new("value_notes", Phase::Compose, RunnerKind::Agent)
            .needs(&["filings"])
            .produces(&["value_notes"]);
        let main = agent("value", &["value_notes"]);
        assert!(r.onboard_persona_pack(manifest(vec![helper, main])).is_ok());
    }

    #[test]
    fn non_compose_phase_is_malformed() {
        let mut r = base_registry();
        let s = SkillSpec::new("v", Phase::Analyze, RunnerKind::Agent)
            .needs(&["filings"])
            .produces(&["persona_view"]);
        assert!(matches!(
            r.onboard_persona_pack(manifest(vec![s])),
            Err(RegistryError::MalformedManifest(_))
        ));
    }
}
