//! Deterministic stand-in provider.
//!
//! The response is a pure function of `(system, prompt, schema, seed)`. With an
//! output schema the stub fills fields from text embedded in the prompt: `Cited`
//! and regex-backed fields copy the first capture verbatim and cite the nearest
//! preceding `=== ARTIFACT <id> ...` header; text fields without a regex copy the
//! prompt section headed `## <field>`. With the agent protocol schema it plays
//! a fixed policy: read everything offered, run every `@compute`, then answer.
//!
//! Test hooks: `FORCE_MALFORMED` anywhere in the prompt adds a field outside
//! the schema; `OMIT_FIELD:<name>` drops that field.

use std::collections::BTreeSet;

use regex::Regex;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::agent::{AGENT_PROTOCOL, ARTIFACT_HEADER};
use super::directives::{Directives, Vars};
use super::provider::{
    estimate_tokens, Provider, ProviderError, ProviderRequest, ProviderResponse, TokenCounts,
};
use super::schema::{FieldKind, FieldSpec, OutputSchema};

pub const FORCE_MALFORMED: &str = "FORCE_MALFORMED";
pub const OMIT_FIELD: &str = "OMIT_FIELD:";

#[derive(Debug, Clone, Default)]
pub struct StubProvider;

impl StubProvider {
    pub fn new() -> Self {
        Self
    }
}

impl Provider for StubProvider {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let text = respond(request);
        Ok(ProviderResponse {
            tokens: TokenCounts {
                prompt: estimate_tokens(&request.system) + estimate_tokens(&request.prompt),
                completion: estimate_tokens(&text),
            },
            text,
        })
    }
}

fn respond(request: &ProviderRequest) -> String {
    match &request.schema {
        Some(s) if s.get("protocol").and_then(Value::as_str) == Some(AGENT_PROTOCOL) => {
            agent_turn(&request.system, &request.prompt)
        }
        Some(s) => match serde_json::from_value::<OutputSchema>(s.clone()) {
            Ok(schema) => fill_schema(&schema, request),
            Err(_) => json!({}).to_string(),
        },
        None => prompt_section(&request.prompt, "Response")
            .unwrap_or_else(|| format!("ack {}", &digest(request)[..12])),
    }
}

fn digest(request: &ProviderRequest) -> String {
    let mut h = Sha256::new();
    h.update(request.system.as_bytes());
    h.update([0]);
    h.update(request.prompt.as_bytes());
    h.update([0]);
    if let Some(s) = &request.schema {
        h.update(s.to_string().as_bytes());
    }
    h.update(request.seed.unwrap_or(0).to_le_bytes());
    hex::encode(h.finalize())
}

fn header_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(
            r"(?m)^{} ([0-9a-f]+)(?: category=([a-z0-9_]+))?[^\n]*$",
            regex::escape(ARTIFACT_HEADER)
        ))
        .unwrap()
    })
}

/// The artifact id whose header most closely precedes byte offset `pos`.
fn source_before(prompt: &str, pos: usize) -> Option<String> {
    header_re()
        .captures_iter(prompt)
        .take_while(|c| c.get(0).unwrap().start() <= pos)
        .last()
        .map(|c| c[1].to_string())
}

/// Text under `## <title>` up to the next `## ` heading or artifact header.
pub fn prompt_section(prompt: &str, title: &str) -> Option<String> {
    let heading = format!("## {title}");
    let mut lines = prompt.lines();
    lines.by_ref().find(|l| l.trim_end() == heading)?;
    let body: Vec<&str> = lines
        .take_while(|l| !l.starts_with("## ") && !l.starts_with(ARTIFACT_HEADER))
        .collect();
    let text = body.join("\n").trim().to_string();
    (!text.is_empty()).then_some(text)
}

fn fill_schema(schema: &OutputSchema, request: &ProviderRequest) -> String {
    let prompt = &request.prompt;
    let omitted: BTreeSet<&str> = prompt
        .match_indices(OMIT_FIELD)
        .filter_map(|(i, _)| {
            prompt[i + OMIT_FIELD.len()..]
                .split(|c: char| c.is_whitespace())
                .next()
        })
        .collect();
    let seed_digest = digest(request);
    let mut out = Map::new();
    for f in &schema.fields {
        if omitted.contains(f.name.as_str()) {
            continue;
        }
        if let Some(v) = fill_field(f, prompt, &seed_digest) {
            out.insert(f.name.clone(), v);
        }
    }
    if prompt.contains(FORCE_MALFORMED) {
        out.insert("unexpected_field".into(), json!(true));
    }
    Value::Object(out).to_string()
}

fn capture(regex: &str, prompt: &str) -> Option<(String, usize)> {
    let re = Regex::new(regex).ok()?;
    let caps = re.captures(prompt)?;
    let m = caps.get(1).or_else(|| caps.get(0))?;
    Some((m.as_str().to_string(), m.start()))
}

fn fill_field(f: &FieldSpec, prompt: &str, seed_digest: &str) -> Option<Value> {
    match &f.kind {
        FieldKind::Cited => {
            let (value, pos) = capture(f.extract.as_deref()?, prompt)?;
            let source = source_before(prompt, pos)?;
            Some(json!({"value": value, "source": source}))
        }
        FieldKind::Text => match &f.extract {
            Some(re) => capture(re, prompt).map(|(v, _)| json!(v)),
            None => prompt_section(prompt, &f.name).map(Value::String),
        },
        FieldKind::Number => {
            let text = match &f.extract {
                Some(re) => capture(re, prompt)?.0,
                None => prompt_section(prompt, &f.name)?,
            };
            text.trim()
                .replace(',', "")
                .parse::<f64>()
                .ok()
                .map(|n| json!(n))
        }
        FieldKind::Enum { values } => {
            let in_prompt = prompt_section(prompt, &f.name).filter(|s| values.contains(s));
            let hinted = f.hint.clone().filter(|h| values.contains(h));
            let chosen = in_prompt.or(hinted).or_else(|| {
                if values.is_empty() {
                    return None;
                }
                let idx = u64::from_str_radix(&seed_digest[..8], 16).ok()? as usize % values.len();
                Some(values[idx].clone())
            })?;
            Some(json!(chosen))
        }
    }
}

struct AgentView {
    available: Vec<(String, String)>,
    read: Vec<(String, String)>,
    computed: BTreeSet<String>,
    params: Map<String, Value>,
    vars: Vars,
}

fn parse_agent_prompt(prompt: &str) -> AgentView {
    let mut available = Vec::new();
    if let Some(list) = prompt_section(prompt, "Available artifacts") {
        for line in list.lines() {
            let mut parts = line.trim_start_matches("- ").split_whitespace();
            if let (Some(id), Some(cat)) = (parts.next(), parts.next()) {
                available.push((id.to_string(), cat.to_string()));
            }
        }
    }
    let mut params = Map::new();
    if let Some(p) = prompt_section(prompt, "Parameters") {
        for line in p.lines() {
            if let Some((k, v)) = line.split_once(':') {
                params.insert(k.trim().to_string(), json!(v.trim()));
            }
        }
    }

    let mut vars = Vars::new();
    for (k, v) in &params {
        vars.set(&format!("params.{k}"), v.clone());
    }
    let mut read = Vec::new();
    let headers: Vec<_> = header_re().captures_iter(prompt).collect();
    for (i, caps) in headers.iter().enumerate() {
        let id = caps[1].to_string();
        let cat = caps
            .get(2)
            .map(|m| m.as_str().to_string())
            .unwrap_or_default();
        let start = caps.get(0).unwrap().end();
        let end = headers
            .get(i + 1)
            .map(|n| n.get(0).unwrap().start())
            .unwrap_or(prompt.len());
        let block = &prompt[start..end];
        let block = block.split("\n### ").next().unwrap_or(block);
        if let Ok(v) = serde_json::from_str::<Value>(block.trim()) {
            vars.absorb(&cat, &v);
        }
        read.push((id, cat));
    }
    let mut computed = BTreeSet::new();
    for line in prompt.lines() {
        if let Some(rest) = line.strip_prefix("COMPUTED ") {
            if let Some((name, value)) = rest.split_once(" = ") {
                computed.insert(name.trim().to_string());
                if let Ok(n) = value.trim().parse::<f64>() {
                    vars.set(name.trim(), json!(n));
                }
            }
        }
    }
    AgentView {
        available,
        read,
        computed,
        params,
        vars,
    }
}

fn agent_turn(system: &str, prompt: &str) -> String {
    let directives = Directives::parse(system);
    let view = parse_agent_prompt(prompt);
    let read_ids: BTreeSet<&str> = view.read.iter().map(|(id, _)| id.as_str()).collect();

    let unread: Vec<Value> = view
        .available
        .iter()
        .filter(|(id, _)| !read_ids.contains(id.as_str()))
        .map(|(id, _)| json!({"tool": "read_artifact", "args": {"id": id}}))
        .collect();
    if !unread.is_empty() {
        return json!({ "tool_calls": unread }).to_string();
    }
    let pending: Vec<Value> = directives
        .computes
        .iter()
        .filter(|(name, _)| !view.computed.contains(name))
        .map(|(name, expr)| json!({"tool": "compute", "args": {"name": name, "expression": expr}}))
        .collect();
    if !pending.is_empty() {
        return json!({ "tool_calls": pending }).to_string();
    }

    let mode = view
        .params
        .get("mode")
        .and_then(Value::as_str)
        .unwrap_or("full")
        .to_string();
    let mut vars = view.vars;
    let verdict = directives
        .verdicts
        .iter()
        .find_map(|rule| match &rule.condition {
            None => Some(rule.verdict.clone()),
            Some(c) => vars
                .eval_bool(c)
                .ok()
                .filter(|b| *b)
                .map(|_| rule.verdict.clone()),
        });
    if let Some(v) = &verdict {
        vars.set("verdict", json!(v));
    }
    let first_of = |cat: &str| -> Option<&str> {
        view.read
            .iter()
            .find(|(_, c)| c == cat)
            .map(|(id, _)| id.as_str())
    };
    let mut sections = Vec::new();
    for s in directives.sections.iter().filter(|s| s.applies_to(&mode)) {
        let cats = if s.cites.is_empty() {
            Vars::referenced_categories(&s.template)
        } else {
            s.cites.clone()
        };
        let mut body = vars.render(&s.template);
        let markers: Vec<String> = cats
            .iter()
            .filter_map(|c| first_of(c))
            .map(|id| format!("[[artifact:{id}]]"))
            .collect();
        if !markers.is_empty() {
            body.push(' ');
            body.push_str(&markers.join(" "));
        }
        sections.push(json!({"title": s.title, "body": body}));
    }
    let mut fin = json!({ "sections": sections, "themes": directives.themes });
    if let Some(v) = verdict {
        fin["verdict"] = json!(v);
    }
    json!({ "final": fin }).to_string()
}
