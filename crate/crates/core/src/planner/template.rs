use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::category::{CategoryId, Phase};

/// Pin value resolved to the skill owned by the engagement's persona.
pub const PERSONA_PIN: &str = "$persona";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTemplate {
    pub id: String,
    pub engagement_type: String,
    /// A compose-phase skill id, or `$persona` for the persona's own compose skill.
    pub compose_skill: String,
    pub required_phases: Vec<Phase>,
    #[serde(default)]
    pub pinned_producers: BTreeMap<CategoryId, String>,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub description: String,
}

impl PlanTemplate {
    pub fn requires(&self, phase: Phase) -> bool {
        self.required_phases.contains(&phase)
    }

    pub fn is_persona_bound(&self) -> bool {
        self.compose_skill == PERSONA_PIN
            || self.pinned_producers.values().any(|v| v == PERSONA_PIN)
    }

    /// `required_phases` must be strictly increasing.
    pub fn phases_in_order(&self) -> bool {
        self.required_phases.windows(2).all(|w| w[0] < w[1])
    }

    pub fn required_sections(&self) -> Vec<String> {
        self.params
            .get("required_sections")
            .and_then(|v| v.as_array())
            .map(|a| {
                a.iter()
                    .filter_map(|s| s.as_str().map(String::from))
                    .collect()
            })
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TemplateCatalog {
    templates: BTreeMap<String, PlanTemplate>,
}

impl TemplateCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, template: PlanTemplate) -> Result<(), PlanError> {
        if !template.phases_in_order() {
            return Err(PlanError::InvalidTemplate(format!(
                "template `{}` lists required_phases out of order",
                template.id
            )));
        }
        if self.templates.contains_key(&template.id) {
            return Err(PlanError::InvalidTemplate(format!(
                "template `{}` is already registered",
                template.id
            )));
        }
        self.templates.insert(template.id.clone(), template);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PlanTemplate> {
        self.templates.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.templates.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PlanTemplate> {
        self.templates.values()
    }

    pub fn load_dir(dir: &Path) -> Result<Self, PlanError> {
        let mut catalog = Self::new();
        let mut files: Vec<_> = fs::read_dir(dir)
            .map_err(|e| PlanError::InvalidTemplate(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|x| x.to_str()) == Some("json"))
            .collect();
        files.sort();
        for f in files {
            let text = fs::read_to_string(&f)
                .map_err(|e| PlanError::InvalidTemplate(format!("{}: {e}", f.display())))?;
            let t: PlanTemplate = serde_json::from_str(&text)
                .map_err(|e| PlanError::InvalidTemplate(format!("{}: {e}", f.display())))?;
            catalog.insert(t)?;
        }
        Ok(catalog)
    }
}
