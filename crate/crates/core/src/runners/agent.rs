//! Bounded tool-use loop for agent skills.
//!
//! Protocol: each provider reply is either
//! `{"tool_calls": [{"tool": ..., "args": {...}}]}` or
//! `{"final": {"sections": [{"title", "body"}], "verdict"?, "themes"?}}`.
//! The tool surface is evidence-store reads and pure arithmetic only.

use std::collections::BTreeMap;
use std::sync::Arc;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::directives::Vars;
use super::provider::ProviderRequest;
use super::{render_artifact, RunnerError, TaskContext};
use crate::category::{CategoryId, Phase};
use crate::registry::Registry;
use crate::store::{Artifact, ArtifactDraft, ArtifactFilter, ArtifactId};

pub const AGENT_PROTOCOL: &str = "agent-v1";
pub const ARTIFACT_HEADER: &str = "=== ARTIFACT";

/// The complete tool registry. There is deliberately no graph tool.
pub const AGENT_TOOLS: &[&str] = &["read_artifact", "search_artifacts", "compute"];

pub const VERDICTS: &[&str] = &["Buy", "Pass", "Hold", "Sell"];

const COMPOSE_CATEGORIES: &[&str] = &["persona_view", "memo", "graph_facts", "brief_assessment"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSection {
    pub title: String,
    pub body: String,
}

/// The structured output of a persona's compose skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaView {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ticker: Option<String>,
    #[serde(default)]
    pub workflow_id: String,
    #[serde(default)]
    pub mode: String,
    pub sections: Vec<ViewSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    #[serde(default)]
    pub themes: Vec<String>,
    pub reads: Vec<ArtifactId>,
    #[serde(default)]
    pub computed: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ToolCall {
    tool: String,
    #[serde(default)]
    args: Value,
}

#[derive(Debug, Deserialize)]
struct FinalAnswer {
    sections: Vec<ViewSection>,
    #[serde(default)]
    verdict: Option<String>,
    #[serde(default)]
    themes: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Reply {
    ToolCalls(Vec<ToolCall>),
    Final(FinalAnswer),
}

pub fn citation_markers(text: &str) -> Vec<ArtifactId> {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[\[artifact:([0-9a-f]+)\]\]").unwrap())
        .captures_iter(text)
        .map(|c| ArtifactId::new(&c[1]))
        .collect()
}

/// Whether a skill owned by `owner` in `engagement_id` may read `artifact`.
/// Compose and maintain outputs are readable only inside the same engagement
/// and only when they are not owned by a different persona.
pub fn independence_allows(
    registry: &Registry,
    owner: Option<&str>,
    engagement_id: &str,
    artifact: &Artifact,
) -> bool {
    let producer = registry.get_skill(&artifact.producer_skill);
    let compose_like = match producer {
        Some(s) => s.phase >= Phase::Compose,
        None => COMPOSE_CATEGORIES.contains(&artifact.category.as_str()),
    };
    if !compose_like {
        return true;
    }
    let producer_owner = producer.and_then(|s| s.owner_persona.as_deref());
    artifact.engagement_id == engagement_id
        && match (producer_owner, owner) {
            (Some(p), Some(o)) => p == o,
            (Some(_), None) => true,
            (None, _) => true,
        }
}

struct Session {
    transcript: String,
    vars: Vars,
    computed: BTreeMap<String, f64>,
}

pub(super) fn run_agent(ctx: &mut TaskContext<'_>) -> Result<(), RunnerError> {
    let recorder = ctx.provider()?;
    let owner = ctx.skill.owner_persona.clone();
    let system = system_prompt(ctx);
    let available: Vec<Arc<Artifact>> = ctx.all_inputs();
    for a in &available {
        if !independence_allows(ctx.registry, owner.as_deref(), ctx.engagement_id, a) {
            return Err(RunnerError::skill(
                "independence-violation",
                format!(
                    "resolved input {} was produced by another persona's compose skill",
                    a.id
                ),
            ));
        }
    }
    let mut session = Session {
        transcript: String::new(),
        vars: Vars::new(),
        computed: BTreeMap::new(),
    };
    for (k, v) in ctx.params {
        session.vars.set(&format!("params.{k}"), v.clone());
    }

    loop {
        ctx.check_limits()?;
        let prompt = user_prompt(ctx, &available, &session.transcript);
        let request = ProviderRequest::new(system.clone(), prompt)
            .schema(json!({ "protocol": AGENT_PROTOCOL, "tools": AGENT_TOOLS }))
            .seed(ctx.seed());
        let text = recorder.complete(request)?;
        let reply: Reply = match serde_json::from_str(text.trim()) {
            Ok(r) => r,
            Err(e) => {
                session.transcript.push_str(&format!(
                    "### protocol-error\nERROR reply was not protocol JSON: {e}\n"
                ));
                continue;
            }
        };
        match reply {
            Reply::ToolCalls(calls) => {
                for call in calls {
                    execute_tool(ctx, owner.as_deref(), &mut session, call);
                }
            }
            Reply::Final(answer) => return finish(ctx, answer, session),
        }
    }
}

fn system_prompt(ctx: &TaskContext<'_>) -> String {
    let mut s = String::new();
    if let Some(p) = ctx
        .skill
        .owner_persona
        .as_deref()
        .and_then(|o| ctx.registry.persona(o))
    {
        s.push_str(&format!(
            "You are {}, {}.\nVoice: {}\n\n",
            p.name, p.title, p.voice
        ));
    }
    s.push_str(ctx.skill.body.trim());
    s.push('\n');
    for (name, note) in &ctx.skill.attachments {
        s.push_str(&format!("\n## Reference: {name}\n{}\n", note.trim()));
    }
    s.push_str(
        "\n## Protocol\nReply with JSON only. Either {\"tool_calls\": [{\"tool\": \"read_artifact\" | \"search_artifacts\" | \"compute\", \"args\": {...}}]} \
or {\"final\": {\"sections\": [{\"title\": ..., \"body\": ...}], \"verdict\": \"Buy|Pass|Hold|Sell\", \"themes\": [...]}}. \
Cite evidence inline as [[artifact:<id>]] using only ids you have read.\n",
    );
    s
}

fn user_prompt(ctx: &TaskContext<'_>, available: &[Arc<Artifact>], transcript: &str) -> String {
    let mut p = String::from("## Parameters\n");
    if let Some(t) = ctx.ticker {
        p.push_str(&format!("ticker: {t}\n"));
    }
    for key in ["workflow_id", "mode", "objective", "persona_id"] {
        if let Some(v) = ctx.param_str(key) {
            p.push_str(&format!("{key}: {v}\n"));
        }
    }
    p.push_str("\n## Available artifacts\n");
    for a in available {
        p.push_str(&format!("- {} {}\n", a.id, a.category));
    }
    p.push_str("\n## Transcript\n");
    p.push_str(transcript);
    p
}

fn execute_tool(
    ctx: &mut TaskContext<'_>,
    owner: Option<&str>,
    session: &mut Session,
    call: ToolCall,
) {
    let arg = |k: &str| call.args.get(k).and_then(Value::as_str).map(String::from);
    match call.tool.as_str() {
        "read_artifact" => {
            let Some(id) = arg("id") else {
                session
                    .transcript
                    .push_str("### read_artifact\nERROR missing id\n");
                return;
            };
            let id = ArtifactId::new(id);
            match ctx.store.get(&id) {
                None => session
                    .transcript
                    .push_str(&format!("### read_artifact {id}\nERROR unknown artifact\n")),
                Some(a) if !independence_allows(ctx.registry, owner, ctx.engagement_id, &a) => {
                    session.transcript.push_str(&format!(
                        "### read_artifact {id}\nERROR another persona's compose output is not readable\n"
                    ))
                }
                Some(a) => {
                    ctx.record_read(&a.id);
                    if let Some(v) = a.json_value() {
                        session.vars.absorb(a.category.as_str(), &v);
                    }
                    session
                        .transcript
                        .push_str(&format!("### read_artifact {id}\n{}", render_artifact(&a)));
                }
            }
        }
        "search_artifacts" => {
            let mut filter = ArtifactFilter::default();
            filter.category = arg("category");
            filter.ticker = arg("ticker").or_else(|| ctx.ticker.map(String::from));
            let hits: Vec<_> = ctx
                .store
                .query(&filter)
                .into_iter()
                .filter(|a| independence_allows(ctx.registry, owner, ctx.engagement_id, a))
                .take(20)
                .collect();
            session.transcript.push_str("### search_artifacts\n");
            for a in hits {
                session
                    .transcript
                    .push_str(&format!("FOUND {} {}\n", a.id, a.category));
            }
        }
        "compute" => {
            let name = arg("name").unwrap_or_else(|| "result".into());
            let expr = arg("expression").unwrap_or_default();
            match session.vars.eval_number(&expr) {
                Ok(v) => {
                    session.vars.set(&name, json!(v));
                    session.computed.insert(name.clone(), v);
                    session
                        .transcript
                        .push_str(&format!("### compute {name}\nCOMPUTED {name} = {v}\n"));
                }
                Err(e) => session
                    .transcript
                    .push_str(&format!("### compute {name}\nERROR {e}\n")),
            }
        }
        other => session
            .transcript
            .push_str(&format!("### {other}\nERROR unknown tool\n")),
    }
}

fn finish(
    ctx: &mut TaskContext<'_>,
    answer: FinalAnswer,
    session: Session,
) -> Result<(), RunnerError> {
    if answer.sections.is_empty() {
        return Err(RunnerError::skill(
            "runner-error",
            "agent returned no sections",
        ));
    }
    if let Some(v) = &answer.verdict {
        if !VERDICTS.contains(&v.as_str()) {
            return Err(RunnerError::skill(
                "runner-error",
                format!("verdict `{v}` is not one of {}", VERDICTS.join("/")),
            ));
        }
    }
    let warn_only = ctx.param_str("uncited_policy") == Some("warn");
    let mut warnings = Vec::new();
    for s in &answer.sections {
        let cites = citation_markers(&s.body);
        for c in &cites {
            if !ctx.reads().contains(c) {
                return Err(RunnerError::UnresolvedCitation(format!(
                    "section `{}` cites {c}, which the agent never read",
                    s.title
                )));
            }
        }
        if cites.is_empty() {
            if warn_only {
                warnings.push(format!("section `{}` carries no citation", s.title));
            } else {
                return Err(RunnerError::UncitedClaim(s.title.clone()));
            }
        }
    }
    for w in &warnings {
        ctx.warn(w.clone());
    }
    let category = ctx
        .skill
        .produces
        .iter()
        .next()
        .cloned()
        .unwrap_or_else(|| CategoryId::from_static("persona_view"));
    let view = PersonaView {
        persona: ctx.skill.owner_persona.clone(),
        ticker: ctx.ticker.map(String::from),
        workflow_id: ctx.param_str("workflow_id").unwrap_or_default().to_string(),
        mode: ctx.param_str("mode").unwrap_or("full").to_string(),
        sections: answer.sections,
        verdict: answer.verdict,
        themes: answer.themes,
        reads: ctx.reads().to_vec(),
        computed: session.computed,
        warnings,
    };
    let draft = ArtifactDraft::structured(category.as_str(), &view)
        .map_err(|e| RunnerError::skill("runner-error", e.to_string()))?
        .parents(ctx.reads().to_vec());
    ctx.emit(draft)?;
    Ok(())
}
