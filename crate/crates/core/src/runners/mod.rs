//! The three execution strategies behind the single skill contract.
//!
//! A runner receives a [`TaskContext`] holding the resolved inputs and emits
//! output artifacts through it. Dispatch is total over [`RunnerKind`].

mod agent;
mod directives;
mod http_provider;
mod hybrid;
mod provider;
mod schema;
mod stub;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{Map, Value};
use thiserror::Error;

use crate::category::{CategoryId, Phase, RunnerKind};
use crate::registry::{Registry, SkillSpec};
use crate::skills::SkillEnv;
use crate::store::{Artifact, ArtifactDraft, ArtifactId, EvidenceStore, StoreError};

pub use agent::{
    citation_markers, independence_allows, PersonaView, ViewSection, AGENT_PROTOCOL, AGENT_TOOLS,
    ARTIFACT_HEADER, VERDICTS,
};
pub use directives::{
    first_sentence, format_value, Directives, SectionDirective, Vars, VerdictRule,
};
pub use http_provider::HttpProvider;
pub use hybrid::{HybridSkill, REGENERATIONS};
pub use provider::{
    estimate_tokens, CallError, CallRecorder, Provider, ProviderCall, ProviderError,
    ProviderRequest, ProviderResponse, TokenCounts,
};
pub use schema::{
    check_structure, FieldKind, FieldSpec, OutputSchema, VerifierReport, VerifierViolation,
};
pub use stub::{prompt_section, StubProvider, FORCE_MALFORMED, OMIT_FIELD};

/// Resolved inputs keyed by category; optional categories may map to an empty list.
pub type ResolvedInputs = BTreeMap<CategoryId, Vec<Arc<Artifact>>>;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("runner-error: deterministic skill `{0}` attempted a provider call")]
    ProviderForbidden(String),
    #[error("provider-unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("verifier-rejected after {attempts} attempt(s): {}", .report.summary())]
    VerifierRejected {
        attempts: u32,
        report: VerifierReport,
    },
    #[error("limit-exceeded: {0}")]
    LimitExceeded(String),
    #[error("uncited-claim: section `{0}` carries no citation")]
    UncitedClaim(String),
    #[error("unresolved-citation: {0}")]
    UnresolvedCitation(String),
    #[error("runner-error: unknown entrypoint `{0}`")]
    UnknownEntrypoint(String),
    #[error("runner-error: output category `{category}` is not declared by `{skill}`")]
    UndeclaredOutput { skill: String, category: String },
    #[error("{kind}: {message}")]
    Skill { kind: String, message: String },
    #[error("runner-error: {0}")]
    Store(#[from] StoreError),
}

impl RunnerError {
    /// A skill-level failure, rendered as `<kind>: <message>`.
    pub fn skill(kind: &str, message: impl Into<String>) -> Self {
        RunnerError::Skill {
            kind: kind.to_string(),
            message: message.into(),
        }
    }

    /// The machine-readable prefix of the diagnostic.
    pub fn tag(&self) -> String {
        let s = self.to_string();
        s.split(':').next().unwrap_or_default().to_string()
    }
}

impl From<CallError> for RunnerError {
    fn from(e: CallError) -> Self {
        match e {
            CallError::BudgetExhausted(n) => {
                RunnerError::LimitExceeded(format!("provider call budget of {n} exhausted"))
            }
            CallError::Provider(ProviderError::Unavailable(m)) => {
                RunnerError::ProviderUnavailable(m)
            }
            CallError::Provider(ProviderError::BadResponse(m)) => {
                RunnerError::skill("runner-error", m)
            }
        }
    }
}

/// Everything one task invocation can see and do.
pub struct TaskContext<'a> {
    pub engagement_id: &'a str,
    pub task_id: &'a str,
    pub skill: &'a SkillSpec,
    pub ticker: Option<&'a str>,
    pub params: &'a Map<String, Value>,
    pub inputs: &'a ResolvedInputs,
    pub store: &'a EvidenceStore,
    pub registry: &'a Registry,
    pub env: &'a SkillEnv,
    recorder: Option<&'a CallRecorder>,
    started: Instant,
    outputs: Vec<ArtifactId>,
    reads: Vec<ArtifactId>,
    warnings: Vec<String>,
}

impl<'a> TaskContext<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        engagement_id: &'a str,
        task_id: &'a str,
        skill: &'a SkillSpec,
        ticker: Option<&'a str>,
        params: &'a Map<String, Value>,
        inputs: &'a ResolvedInputs,
        store: &'a EvidenceStore,
        registry: &'a Registry,
        env: &'a SkillEnv,
        recorder: Option<&'a CallRecorder>,
    ) -> Self {
        Self {
            engagement_id,
            task_id,
            skill,
            ticker,
            params,
            inputs,
            store,
            registry,
            env,
            recorder,
            started: Instant::now(),
            outputs: Vec::new(),
            reads: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn inputs(&self, category: &str) -> &[Arc<Artifact>] {
        self.inputs
            .iter()
            .find(|(c, _)| *c == category)
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[])
    }

    /// Every resolved input, ordered by category then id.
    pub fn all_inputs(&self) -> Vec<Arc<Artifact>> {
        let mut all: Vec<_> = self.inputs.values().flatten().cloned().collect();
        all.sort_by(|a, b| a.category.cmp(&b.category).then_with(|| a.id.cmp(&b.id)));
        all.dedup_by(|a, b| a.id == b.id);
        all
    }

    pub fn param_str(&self, key: &str) -> Option<&str> {
        self.params.get(key).and_then(Value::as_str)
    }

    pub fn require_ticker(&self) -> Result<&'a str, RunnerError> {
        self.ticker
            .ok_or_else(|| RunnerError::skill("runner-error", "engagement has no ticker"))
    }

    /// Appends an output. Unset producer fields and ticker are filled in;
    /// with no explicit parents the artifact descends from every input.
    pub fn emit(&mut self, mut draft: ArtifactDraft) -> Result<ArtifactId, RunnerError> {
        if !self.skill.produces_category(&draft.category) {
            return Err(RunnerError::UndeclaredOutput {
                skill: self.skill.id.clone(),
                category: draft.category,
            });
        }
        draft = draft.produced_by(self.engagement_id, &self.skill.id, self.task_id);
        if draft.ticker.is_none() {
            draft.ticker = self.ticker.map(String::from);
        }
        if draft.parent_ids.is_empty() {
            draft.parent_ids = self.all_inputs().iter().map(|a| a.id.clone()).collect();
        }
        let id = self.store.append(draft)?;
        if !self.outputs.contains(&id) {
            self.outputs.push(id.clone());
        }
        Ok(id)
    }

    pub fn provider(&self) -> Result<&'a CallRecorder, RunnerError> {
        if self.skill.runner == RunnerKind::Deterministic {
            return Err(RunnerError::ProviderForbidden(self.skill.id.clone()));
        }
        self.recorder
            .ok_or_else(|| RunnerError::ProviderUnavailable("no provider configured".into()))
    }

    pub fn seed(&self) -> Option<u64> {
        self.recorder.and_then(CallRecorder::seed)
    }

    pub fn check_limits(&self) -> Result<(), RunnerError> {
        let budget = Duration::from_secs(self.skill.limits.max_wall_time_secs);
        if self.started.elapsed() > budget {
            return Err(RunnerError::LimitExceeded(format!(
                "wall time budget of {}s exhausted",
                budget.as_secs()
            )));
        }
        Ok(())
    }

    pub fn record_read(&mut self, id: &ArtifactId) {
        if !self.reads.contains(id) {
            self.reads.push(id.clone());
        }
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let m = message.into();
        tracing::warn!(task = self.task_id, "{m}");
        self.warnings.push(m);
    }

    pub fn outputs(&self) -> &[ArtifactId] {
        &self.outputs
    }

    pub fn reads(&self) -> &[ArtifactId] {
        &self.reads
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// The phase of the skill that produced `artifact`, if registered.
    pub fn producer_phase(&self, artifact: &Artifact) -> Option<Phase> {
        self.registry
            .get_skill(&artifact.producer_skill)
            .map(|s| s.phase)
    }
}

pub type DeterministicFn = fn(&mut TaskContext<'_>) -> Result<(), RunnerError>;

/// Host-language implementations addressable from skill manifests:
/// deterministic bodies as `builtin:<name>`, hybrid handlers by the
/// `handler` metadata key (falling back to the skill id).
#[derive(Clone, Default)]
pub struct Builtins {
    deterministic: BTreeMap<String, DeterministicFn>,
    hybrid: BTreeMap<String, Arc<dyn HybridSkill>>,
}

impl Builtins {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_deterministic(&mut self, name: &str, f: DeterministicFn) {
        self.deterministic.insert(name.to_string(), f);
    }

    pub fn register_hybrid(&mut self, name: &str, handler: Arc<dyn HybridSkill>) {
        self.hybrid.insert(name.to_string(), handler);
    }

    pub fn deterministic_names(&self) -> impl Iterator<Item = &String> {
        self.deterministic.keys()
    }

    pub fn hybrid_names(&self) -> impl Iterator<Item = &String> {
        self.hybrid.keys()
    }

    fn entrypoint(spec: &SkillSpec) -> &str {
        spec.body
            .trim()
            .strip_prefix("builtin:")
            .unwrap_or(spec.body.trim())
    }

    fn handler_name(spec: &SkillSpec) -> &str {
        spec.metadata
            .get("handler")
            .map(String::as_str)
            .unwrap_or(&spec.id)
    }
}

/// Runs the task's skill with the strategy its contract names.
pub fn run(ctx: &mut TaskContext<'_>, builtins: &Builtins) -> Result<(), RunnerError> {
    match ctx.skill.runner {
        RunnerKind::Deterministic => run_deterministic(ctx, builtins),
        RunnerKind::Hybrid => {
            let name = Builtins::handler_name(ctx.skill);
            let handler = builtins
                .hybrid
                .get(name)
                .cloned()
                .ok_or_else(|| RunnerError::UnknownEntrypoint(name.to_string()))?;
            hybrid::run_hybrid(ctx, handler.as_ref())
        }
        RunnerKind::Agent => agent::run_agent(ctx),
    }
}

pub fn run_deterministic(
    ctx: &mut TaskContext<'_>,
    builtins: &Builtins,
) -> Result<(), RunnerError> {
    let name = Builtins::entrypoint(ctx.skill);
    let f = builtins
        .deterministic
        .get(name)
        .ok_or_else(|| RunnerError::UnknownEntrypoint(name.to_string()))?;
    f(ctx)
}

/// Renders one artifact the way every prompt embeds evidence.
pub fn render_artifact(a: &Artifact) -> String {
    format!(
        "{ARTIFACT_HEADER} {} category={} producer={} ===\n{}\n",
        a.id, a.category, a.producer_skill, a.payload
    )
}
