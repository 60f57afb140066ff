//! Persona distillation: corpus (a0) → structured material (a1) → persona
//! document (a2) → skill spec (a3) → pack (a4).
//!
//! Only step 2 talks to a provider. Every intermediate is stored as an
//! artifact, so a reviewer can edit a1 or a2 and re-run the later steps
//! without going back to the corpus.

mod compile;
mod extract;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use compile::{bundle, specify, PERSONA_NEEDS};
pub use extract::{extract, sentences};

use crate::planner::TemplateCatalog;
use crate::registry::{PackManifest, SkillSpec, WorkflowRef};
use crate::runners::{
    check_structure, CallError, CallRecorder, FieldSpec, OutputSchema, Provider, ProviderRequest,
};
use crate::store::{ArtifactDraft, ArtifactId, EvidenceStore, StoreError};

/// Provider calls allowed in step 2: the first attempt plus one regeneration.
pub const GENERATE_BUDGET: u32 = 2;

pub const PERSONA_FIELDS: [&str; 5] = [
    "traits",
    "investment_heuristics",
    "risk_profile",
    "preferred_evidence",
    "communication_style",
];

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("empty-corpus: {0}")]
    EmptyCorpus(String),
    #[error("malformed corpus: {0}")]
    Corpus(String),
    #[error("template-violation: {0}")]
    TemplateViolation(String),
    #[error("provider-unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("unknown-workflow-template: `{0}` is not a registered template")]
    UnknownWorkflowTemplate(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("i/o at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DistillError {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::EmptyCorpus(_) => "empty-corpus",
            Self::Corpus(_) => "malformed-corpus",
            Self::TemplateViolation(_) => "template-violation",
            Self::ProviderUnavailable(_) => "provider-unavailable",
            Self::UnknownWorkflowTemplate(_) => "unknown-workflow-template",
            Self::InvalidSpec(_) => "invalid-spec",
            Self::Store(_) => "store",
            Self::Io { .. } => "io",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DistillError + '_ {
    move |source| DistillError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    Letter,
    Interview,
    BookExcerpt,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    /// File name inside the corpus directory; excerpts cite it.
    pub file: String,
    pub title: String,
    pub kind: DocumentKind,
    pub text: String,
}

/// a0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCorpus {
    pub documents: Vec<CorpusDocument>,
}

#[derive(Debug, Clone, Deserialize)]
struct ManifestEntry {
    file: String,
    title: String,
    kind: DocumentKind,
}

#[derive(Debug, Clone, Deserialize)]
struct CorpusManifest {
    documents: Vec<ManifestEntry>,
    #[serde(default)]
    persona: Option<BundleConfig>,
}

impl SourceCorpus {
    pub fn validate(&self) -> Result<(), DistillError> {
        if self.documents.is_empty() {
            return Err(DistillError::EmptyCorpus(
                "the corpus has no documents".into(),
            ));
        }
        if let Some(d) = self.documents.iter().find(|d| d.text.trim().is_empty()) {
            return Err(DistillError::EmptyCorpus(format!(
                "document `{}` is empty",
                d.file
            )));
        }
        Ok(())
    }

    /// Loads `manifest.json` and the files it lists. The manifest may also
    /// carry the persona record used when bundling.
    pub fn load_dir(dir: &Path) -> Result<(Self, Option<BundleConfig>), DistillError> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: CorpusManifest = serde_json::from_str(&text)
            .map_err(|e| DistillError::Corpus(format!("{}: {e}", path.display())))?;
        let mut documents = Vec::with_capacity(manifest.documents.len());
        for entry in manifest.documents {
            let file = dir.join(&entry.file);
            let text = fs::read_to_string(&file).map_err(io_err(&file))?;
            documents.push(CorpusDocument {
                file: entry.file,
                title: entry.title,
                kind: entry.kind,
                text,
            });
        }
        let corpus = SourceCorpus { documents };
        corpus.validate()?;
        Ok((corpus, manifest.persona))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentType {
    BusinessQuality,
    ValuationDiscipline,
    RiskAssessment,
    MacroSensitivity,
}

impl JudgmentType {
    pub const ALL: [JudgmentType; 4] = [
        JudgmentType::BusinessQuality,
        JudgmentType::ValuationDiscipline,
        JudgmentType::RiskAssessment,
        JudgmentType::MacroSensitivity,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excerpt {
    pub text: String,
    /// `file` of the corpus document the sentence came from.
    pub source: String,
    pub judgment_type: JudgmentType,
}

/// a1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredMaterial {
    pub excerpts: Vec<Excerpt>,
    pub style_cues: Vec<String>,
    pub heuristics: Vec<String>,
}

impl StructuredMaterial {
    pub fn of_type(&self, kind: JudgmentType) -> impl Iterator<Item = &Excerpt> {
        self.excerpts
            .iter()
            .filter(move |e| e.judgment_type == kind)
    }

    /// Excerpts whose source is not a document of `corpus`.
    pub fn unresolved_sources<'a>(&'a self, corpus: &SourceCorpus) -> Vec<&'a Excerpt> {
        self.excerpts
            .iter()
            .filter(|e| !corpus.documents.iter().any(|d| d.file == e.source))
            .collect()
    }

    /// Draft text per template field, handed to the provider as a starting
    /// point. The stub provider returns these drafts unchanged.
    fn drafts(&self) -> [(&'static str, String); 5] {
        // First-person sentences lead so the draft already reads as the
        // investor speaking.
        let take = |kinds: &[JudgmentType], n: usize| -> String {
            let mut picked: Vec<&str> = Vec::new();
            for k in kinds {
                let mut of_kind: Vec<&Excerpt> = self.of_type(*k).collect();
                of_kind.sort_by_key(|e| !extract::is_first_person(&e.text));
                for e in of_kind.into_iter().take(n) {
                    if !picked.contains(&e.text.as_str()) {
                        picked.push(&e.text);
                    }
                }
            }
            let text = picked.join(" ");
            if text.is_empty() || extract::is_first_person(&text) {
                text
            } else {
                format!("I pay attention to statements like this: {text}")
            }
        };
        let bullets = |items: &[String]| {
            items
                .iter()
                .map(|s| format!("- {s}"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        [
            ("traits", take(&[JudgmentType::BusinessQuality], 3)),
            ("investment_heuristics", bullets(&self.heuristics)),
            (
                "risk_profile",
                take(
                    &[JudgmentType::RiskAssessment, JudgmentType::MacroSensitivity],
                    2,
                ),
            ),
            (
                "preferred_evidence",
                take(&[JudgmentType::ValuationDiscipline], 3),
            ),
            ("communication_style", self.style_cues.join("\n")),
        ]
    }
}

/// a2: the fixed five-field persona template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaDocument {
    pub traits: String,
    pub investment_heuristics: String,
    pub risk_profile: String,
    pub preferred_evidence: String,
    pub communication_style: String,
}

impl PersonaDocument {
    pub fn field(&self, name: &str) -> Option<&str> {
        Some(match name {
            "traits" => &self.traits,
            "investment_heuristics" => &self.investment_heuristics,
            "risk_profile" => &self.risk_profile,
            "preferred_evidence" => &self.preferred_evidence,
            "communication_style" => &self.communication_style,
            _ => return None,
        })
    }

    /// Empty list when every field is present, non-empty and first person.
    pub fn violations(&self) -> Vec<String> {
        PERSONA_FIELDS
            .iter()
            .filter_map(|f| {
                let text = self.field(f).unwrap_or_default();
                if text.trim().is_empty() {
                    Some(format!("{f}: empty"))
                } else if !extract::is_first_person(text) {
                    Some(format!("{f}: not written in the first person"))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn to_markdown(&self) -> String {
        PERSONA_FIELDS
            .iter()
            .map(|f| {
                let heading = f.replace('_', " ");
                let mut h = heading.chars();
                let heading = h
                    .next()
                    .map(|c| c.to_uppercase().chain(h).collect::<String>())
                    .unwrap_or_default();
                format!(
                    "## {heading}\n{}\n",
                    self.field(f).unwrap_or_default().trim()
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn persona_schema() -> OutputSchema {
    OutputSchema::new(
        "persona_document",
        PERSONA_FIELDS
            .iter()
            .map(|f| FieldSpec::text(f).describe("first-person prose"))
            .collect(),
    )
}

const GENERATE_SYSTEM: &str = "You turn an investor's own writing into a persona description. \
Fill every field of the template in the first person, using only the material provided.";

#[derive(Debug, Clone, Default)]
pub struct GenerateOptions {
    /// Appended to the prompt verbatim; used by tests to steer the stub.
    pub extra_instructions: Option<String>,
}

/// Step 2. One provider call when the first answer fits the template, two
/// when it must be regenerated; a second misfit is a template violation.
pub fn generate(
    material: &StructuredMaterial,
    recorder: &CallRecorder,
    options: &GenerateOptions,
) -> Result<PersonaDocument, DistillError> {
    let schema = persona_schema();
    let mut prompt = format!("{}\n\nDraft material per field:\n", schema.instructions());
    for (field, draft) in material.drafts() {
        prompt.push_str(&format!("\n## {field}\n{draft}\n"));
    }
    if let Some(extra) = &options.extra_instructions {
        prompt.push_str(&format!("\n{extra}\n"));
    }
    let mut problems = String::new();
    for attempt in 0..GENERATE_BUDGET {
        let mut p = prompt.clone();
        if attempt > 0 {
            p.push_str(&format!("\nThe previous answer was rejected: {problems}\n"));
        }
        let request = ProviderRequest::new(GENERATE_SYSTEM, p).schema(schema.to_value());
        let text = recorder.complete(request).map_err(|e| match e {
            CallError::Provider(p) => DistillError::ProviderUnavailable(p.to_string()),
            CallError::BudgetExhausted(_) => DistillError::TemplateViolation(e.to_string()),
        })?;
        problems = match check_structure(&schema, &text) {
            Err(report) => report.summary(),
            Ok(map) => {
                let doc: PersonaDocument = serde_json::from_value(Value::Object(map))
                    .map_err(|e| DistillError::TemplateViolation(e.to_string()))?;
                let v = doc.violations();
                if v.is_empty() {
                    return Ok(doc);
                }
                v.join("; ")
            }
        };
    }
    Err(DistillError::TemplateViolation(problems))
}

/// Persona record fields applied at bundling time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleConfig {
    pub id: String,
    pub name: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector_hint: Option<String>,
    pub voice: String,
    pub default_template: String,
    pub workflows: Vec<WorkflowRef>,
    /// Defaults to `<id>_analysis`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill_id: Option<String>,
    #[serde(default)]
    pub config: Map<String, Value>,
}

impl BundleConfig {
    pub fn skill_id(&self) -> String {
        self.skill_id
            .clone()
            .unwrap_or_else(|| format!("{}_analysis", self.id.replace('-', "_")))
    }
}

/// Ids of the stored chain plus the final objects. Steps that were not run
/// leave their id empty.
#[derive(Debug, Clone)]
pub struct DistillRun {
    pub corpus: Option<ArtifactId>,
    pub material: Option<ArtifactId>,
    pub persona: ArtifactId,
    pub spec: ArtifactId,
    pub pack: ArtifactId,
    pub persona_document: PersonaDocument,
    pub skill_spec: SkillSpec,
    pub manifest: PackManifest,
    pub provider_calls: u32,
}

/// Runs the chain against a store, recording each intermediate under one
/// distillation engagement.
pub struct Distiller<'a> {
    store: &'a EvidenceStore,
    catalog: &'a TemplateCatalog,
    engagement_id: String,
    seed: Option<u64>,
    calls_log: Option<PathBuf>,
}

impl<'a> Distiller<'a> {
    pub fn new(
        store: &'a EvidenceStore,
        catalog: &'a TemplateCatalog,
        engagement_id: &str,
    ) -> Self {
        Self {
            store,
            catalog,
            engagement_id: engagement_id.to_string(),
            seed: None,
            calls_log: None,
        }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_calls_log(mut self, path: PathBuf) -> Self {
        self.calls_log = Some(path);
        self
    }

    fn put<T: Serialize>(
        &self,
        category: &str,
        step: &str,
        value: &T,
        parent: Option<&ArtifactId>,
    ) -> Result<ArtifactId, DistillError> {
        let draft = ArtifactDraft::structured(category, value)
            .map_err(|e| DistillError::Corpus(e.to_string()))?
            .produced_by(&self.engagement_id, &format!("distill_{step}"), step)
            .parents(parent.cloned());
        Ok(self.store.append(draft)?)
    }

    /// Steps 1–4 from a corpus.
    pub fn run(
        &self,
        corpus: &SourceCorpus,
        config: &BundleConfig,
        provider: Arc<dyn Provider>,
        options: &GenerateOptions,
    ) -> Result<DistillRun, DistillError> {
        let material = extract(corpus)?;
        let a0 = self.put("source_corpus", "corpus", corpus, None)?;
        let a1 = self.put("structured_material", "extract", &material, Some(&a0))?;
        let mut run = self.from_material(&material, Some(&a1), config, provider, options)?;
        run.corpus = Some(a0);
        Ok(run)
    }

    /// Steps 2–4 from (possibly edited) material.
    pub fn from_material(
        &self,
        material: &StructuredMaterial,
        material_id: Option<&ArtifactId>,
        config: &BundleConfig,
        provider: Arc<dyn Provider>,
        options: &GenerateOptions,
    ) -> Result<DistillRun, DistillError> {
        let a1 = match material_id {
            Some(id) => id.clone(),
            None => self.put("structured_material", "extract", material, None)?,
        };
        let mut recorder = CallRecorder::new(provider, "generate", GENERATE_BUDGET, self.seed);
        if let Some(path) = &self.calls_log {
            recorder = recorder.with_log(path.clone());
        }
        let persona = generate(material, &recorder, options)?;
        let a2 = self.put("persona_document", "generate", &persona, Some(&a1))?;
        let mut run = self.from_persona(&persona, Some(&a2), config)?;
        run.material = Some(a1);
        run.provider_calls = recorder.call_count();
        Ok(run)
    }

    /// Steps 3–4 from a (possibly edited) persona document. No provider is
    /// involved. Without `persona_id` the document is stored as a new a2.
    pub fn from_persona(
        &self,
        persona: &PersonaDocument,
        persona_id: Option<&ArtifactId>,
        config: &BundleConfig,
    ) -> Result<DistillRun, DistillError> {
        let v = persona.violations();
        if !v.is_empty() {
            return Err(DistillError::TemplateViolation(v.join("; ")));
        }
        let a2 = match persona_id {
            Some(id) => id.clone(),
            None => self.put("persona_document", "generate", persona, None)?,
        };
        let spec = specify(persona, config, self.catalog);
        let a3 = self.put("skill_spec", "specify", &spec, Some(&a2))?;
        let manifest = bundle(&spec, config, self.catalog)?;
        let a4 = self.put("persona_pack", "bundle", &manifest, Some(&a3))?;
        Ok(DistillRun {
            corpus: None,
            material: None,
            persona: a2,
            spec: a3,
            pack: a4,
            persona_document: persona.clone(),
            skill_spec: spec,
            manifest,
            provider_calls: 0,
        })
    }

    /// Stores an edited persona document as a child of the a2 it replaces.
    pub fn revise_persona(
        &self,
        previous: &ArtifactId,
        edited: &PersonaDocument,
    ) -> Result<ArtifactId, DistillError> {
        self.put("persona_document", "revise", edited, Some(previous))
    }
}

/// Writes `pack.json` into `dir`, creating it if needed. The directory loads
/// back with `registry::load_pack_dir`.
pub fn export_pack(manifest: &PackManifest, dir: &Path) -> Result<PathBuf, DistillError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("pack.json");
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| DistillError::InvalidSpec(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}
