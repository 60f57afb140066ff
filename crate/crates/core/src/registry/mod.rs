//! Skill and persona registry.
//!
//! Skills declare a contract (phase, runner, `needs`, `produces`) plus an
//! opaque body. The registry validates contracts, answers producer lookups
//! for the planner and stores persona packs. It is append-only: an id can be
//! registered once per process.

mod adapter;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::category::{CategoryId, Phase, RunnerKind};

pub use adapter::{load_pack_dir, load_skill_dir, PackManifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_wall_time_secs: u64,
    pub max_provider_calls: u32,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_wall_time_secs: 300,
            max_provider_calls: 8,
        }
    }
}

/// A skill's declarative contract plus its opaque body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSpec {
    pub id: String,
    pub name: String,
    pub phase: Phase,
    pub runner: RunnerKind,
    #[serde(default)]
    pub needs: BTreeSet<CategoryId>,
    pub produces: BTreeSet<CategoryId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_config: Option<ModelConfig>,
    #[serde(default)]
    pub limits: Limits,
    /// Prompt text for hybrid and agent skills, `builtin:<name>` entrypoint for
    /// deterministic ones. Never interpreted by the registry or planner.
    #[serde(default)]
    pub body: String,
    /// Long-form reference notes shipped alongside a pack, keyed by file name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attachments: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner_persona: Option<String>,
    /// Free-form descriptive metadata (e.g. declared capabilities); not acted on.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl SkillSpec {
    /// A minimal spec, mostly useful in tests and examples.
    pub fn new(id: &str, phase: Phase, runner: RunnerKind) -> Self {
        Self {
            id: id.to_string(),
            name: id.to_string(),
            phase,
            runner,
            needs: BTreeSet::new(),
            produces: BTreeSet::new(),
            model_config: None,
            limits: Limits::default(),
            body: String::new(),
            attachments: BTreeMap::new(),
            owner_persona: None,
            metadata: BTreeMap::new(),
        }
    }

    pub fn needs(mut self, cats: &[&str]) -> Self {
        self.needs = cats
            .iter()
            .map(|c| CategoryId::new(*c).expect("valid category"))
            .collect();
        self
    }

    pub fn produces(mut self, cats: &[&str]) -> Self {
        self.produces = cats
            .iter()
            .map(|c| CategoryId::new(*c).expect("valid category"))
            .collect();
        self
    }

    pub fn body(mut self, body: impl Into<String>) -> Self {
        self.body = body.into();
        self
    }

    pub fn needs_category(&self, c: &str) -> bool {
        self.needs.iter().any(|n| n == c)
    }

    pub fn produces_category(&self, c: &str) -> bool {
        self.produces.iter().any(|p| p == c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.message)
    }
}

fn violation(rule: &str, message: impl Into<String>) -> Violation {
    Violation {
        rule: rule.to_string(),
        message: message.into(),
    }
}

/// Lists every violated contract rule; an empty list means the spec is valid.
pub fn validate_spec(spec: &SkillSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.id.trim().is_empty() {
        out.push(violation("empty-id", "skill id must be non-empty"));
    }
    if spec.produces.is_empty() {
        out.push(violation(
            "empty-produces",
            "a skill must produce at least one category",
        ));
    }
    let overlap: Vec<_> = spec
        .needs
        .intersection(&spec.produces)
        .map(|c| c.as_str())
        .collect();
    if !overlap.is_empty() {
        out.push(violation(
            "needs-produces-overlap",
            format!(
                "categories both needed and produced: {}",
                overlap.join(", ")
            ),
        ));
    }
    if spec.runner == RunnerKind::Deterministic && spec.model_config.is_some() {
        out.push(violation(
            "deterministic-model-config",
            "deterministic skills make no model calls and may not carry model_config",
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowRef {
    pub name: String,
    pub template_id: String,
    #[serde(default)]
    pub description: String,
}

/// The deployable persona unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaPack {
    pub id: String,
    pub name: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector_hint: Option<String>,
    pub voice: String,
    pub skills: Vec<String>,
    pub default_template: String,
    pub workflows: Vec<WorkflowRef>,
    #[serde(default)]
    pub config: serde_json::Map<String, serde_json::Value>,
}

/// Checks the record-level invariants shared by onboarded and distilled packs.
pub fn validate_pack(pack: &PersonaPack) -> Vec<Violation> {
    let mut out = Vec::new();
    if pack.id.trim().is_empty() {
        out.push(violation("empty-id", "persona id must be non-empty"));
    }
    if pack.skills.is_empty() {
        out.push(violation(
            "empty-skills",
            "a persona pack must own at least one skill",
        ));
    }
    if !pack
        .workflows
        .iter()
        .any(|w| w.template_id == pack.default_template)
    {
        out.push(violation(
            "default-template-not-in-workflows",
            format!(
                "default_template `{}` is not one of the pack's workflows",
                pack.default_template
            ),
        ));
    }
    out
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("invalid spec `{id}`: {}", join_violations(.violations))]
    InvalidSpec {
        id: String,
        violations: Vec<Violation>,
    },
    #[error("skill `{skill}` has needs with no producer: {}", .categories.join(", "))]
    UnresolvableNeed {
        skill: String,
        categories: Vec<String>,
    },
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("unknown persona `{0}`")]
    UnknownPersona(String),
    #[error("i/o reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    skills: BTreeMap<String, SkillSpec>,
    order: Vec<String>,
    personas: BTreeMap<String, PersonaPack>,
    persona_order: Vec<String>,
    warnings: Vec<String>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_skill(&mut self, spec: SkillSpec) -> Result<String, RegistryError> {
        let violations = validate_spec(&spec);
        if !violations.is_empty() {
            return Err(RegistryError::InvalidSpec {
                id: spec.id.clone(),
                violations,
            });
        }
        if self.skills.contains_key(&spec.id) {
            return Err(RegistryError::DuplicateId(spec.id.clone()));
        }
        for c in spec.needs.iter().chain(&spec.produces) {
            if !c.is_canonical() {
                let w = format!("skill `{}` uses non-canonical category `{c}`", spec.id);
                tracing::warn!("{w}");
                self.warnings.push(w);
            }
        }
        let id = spec.id.clone();
        self.order.push(id.clone());
        self.skills.insert(id.clone(), spec);
        Ok(id)
    }

    pub fn get_skill(&self, id: &str) -> Option<&SkillSpec> {
        self.skills.get(id)
    }

    /// Skills in registration order.
    pub fn skills(&self) -> impl Iterator<Item = &SkillSpec> {
        self.order.iter().map(|id| &self.skills[id])
    }

    pub fn skill_count(&self) -> usize {
        self.order.len()
    }

    /// Producers of `category`, ordered by skill id.
    pub fn producers_of(&self, category: &str) -> Vec<String> {
        self.skills
            .values()
            .filter(|s| s.produces_category(category))
            .map(|s| s.id.clone())
            .collect()
    }

    /// Producers with a template-pinned producer moved to the front.
    pub fn producers_for(&self, category: &str, pinned: Option<&str>) -> Vec<String> {
        let mut all = self.producers_of(category);
        if let Some(pin) = pinned {
            if let Some(pos) = all.iter().position(|s| s == pin) {
                let p = all.remove(pos);
                all.insert(0, p);
            }
        }
        all
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn register_persona(&mut self, pack: PersonaPack) -> Result<(), RegistryError> {
        let violations = validate_pack(&pack);
        if !violations.is_empty() {
            return Err(RegistryError::MalformedManifest(join_violations(
                &violations,
            )));
        }
        if self.personas.contains_key(&pack.id) {
            return Err(RegistryError::DuplicateId(pack.id.clone()));
        }
        for s in &pack.skills {
            if !self.skills.contains_key(s) {
                return Err(RegistryError::UnknownSkill(s.clone()));
            }
        }
        self.persona_order.push(pack.id.clone());
        self.personas.insert(pack.id.clone(), pack);
        Ok(())
    }

    pub fn persona(&self, id: &str) -> Option<&PersonaPack> {
        self.personas.get(id)
    }

    pub fn personas(&self) -> impl Iterator<Item = &PersonaPack> {
        self.persona_order.iter().map(|id| &self.personas[id])
    }

    /// Validates an external pack manifest against the registered producers
    /// and registers its skills as compose-phase skills owned by the persona.
    /// Returns the persona record and the ids of the skills the pack registered.
    pub fn onboard_persona_pack(
        &mut self,
        manifest: PackManifest,
    ) -> Result<(PersonaPack, Vec<String>), RegistryError> {
        adapter::onboard(self, manifest)
    }

    /// Loads every `*.json` skill manifest in a directory, in file-name order.
    pub fn register_skill_dir(&mut self, dir: &Path) -> Result<Vec<String>, RegistryError> {
        load_skill_dir(dir)?
            .into_iter()
            .map(|s| self.register_skill(s))
            .collect()
    }
}
