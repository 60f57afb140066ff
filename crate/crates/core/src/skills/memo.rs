//! `assemble_memo` and the memo document format.
//!
//! A memo is Markdown with a front-matter block:
//!
//! ```text
//! ---
//! title: NVDA: pass at current prices
//! ticker: NVDA
//! persona: buffett
//! workflow: buffett-pitch
//! engagement: eng-0001-1a2b3c4d
//! themes: ["ai_infra"]
//! also_covers: []
//! verdict: Pass
//! ---
//! # NVDA: pass at current prices
//!
//! ## Thesis
//! ... [[artifact:<id>]] ...
//!
//! ## Sources
//! - [[artifact:<id>]] kpis (extract_KPIs)
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::GateDecision;
use crate::runners::{
    citation_markers, FieldSpec, HybridSkill, OutputSchema, PersonaView, RunnerError, TaskContext,
    VerifierReport, VERDICTS,
};
use crate::store::{ArtifactDraft, ArtifactId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoSection {
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub id: ArtifactId,
    pub category: String,
    pub producer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoDocument {
    pub title: String,
    pub ticker: String,
    pub persona: String,
    pub workflow: String,
    #[serde(default)]
    pub engagement: String,
    #[serde(default)]
    pub themes: Vec<String>,
    #[serde(default)]
    pub also_covers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    pub sections: Vec<MemoSection>,
    pub sources: Vec<SourceRef>,
}

#[derive(Debug, Error, PartialEq)]
pub enum MemoParseError {
    #[error("memo has no front-matter block")]
    NoFrontMatter,
    #[error("front matter lacks `{0}`")]
    MissingKey(&'static str),
    #[error("front-matter key `{key}` is not a JSON list: {message}")]
    BadList { key: String, message: String },
}

fn list_line(key: &str, items: &[String]) -> String {
    format!(
        "{key}: {}\n",
        serde_json::to_string(items).unwrap_or_else(|_| "[]".into())
    )
}

impl MemoDocument {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("---\n");
        s.push_str(&format!("title: {}\n", self.title));
        s.push_str(&format!("ticker: {}\n", self.ticker));
        s.push_str(&format!("persona: {}\n", self.persona));
        s.push_str(&format!("workflow: {}\n", self.workflow));
        if !self.engagement.is_empty() {
            s.push_str(&format!("engagement: {}\n", self.engagement));
        }
        s.push_str(&list_line("themes", &self.themes));
        s.push_str(&list_line("also_covers", &self.also_covers));
        if let Some(v) = &self.verdict {
            s.push_str(&format!("verdict: {v}\n"));
        }
        s.push_str("---\n");
        s.push_str(&format!("# {}\n", self.title));
        for sec in &self.sections {
            s.push_str(&format!("\n## {}\n{}\n", sec.title, sec.body.trim()));
        }
        s.push_str("\n## Sources\n");
        for src in &self.sources {
            s.push_str(&format!(
                "- [[artifact:{}]] {} ({})\n",
                src.id, src.category, src.producer
            ));
        }
        s
    }

    pub fn parse(markdown: &str) -> Result<Self, MemoParseError> {
        let rest = markdown
            .strip_prefix("---\n")
            .ok_or(MemoParseError::NoFrontMatter)?;
        let (front, body) = rest
            .split_once("\n---\n")
            .ok_or(MemoParseError::NoFrontMatter)?;
        let mut doc = MemoDocument {
            title: String::new(),
            ticker: String::new(),
            persona: String::new(),
            workflow: String::new(),
            engagement: String::new(),
            themes: Vec::new(),
            also_covers: Vec::new(),
            verdict: None,
            sections: Vec::new(),
            sources: Vec::new(),
        };
        for line in front.lines() {
            let Some((k, v)) = line.split_once(':') else {
                continue;
            };
            let v = v.trim().to_string();
            let list = |v: &str| -> Result<Vec<String>, MemoParseError> {
                serde_json::from_str(v).map_err(|e| MemoParseError::BadList {
                    key: k.trim().to_string(),
                    message: e.to_string(),
                })
            };
            match k.trim() {
                "title" => doc.title = v,
                "ticker" => doc.ticker = v,
                "persona" => doc.persona = v,
                "workflow" => doc.workflow = v,
                "engagement" => doc.engagement = v,
                "themes" => doc.themes = list(&v)?,
                "also_covers" => doc.also_covers = list(&v)?,
                "verdict" if !v.is_empty() => doc.verdict = Some(v),
                _ => {}
            }
        }
        if doc.ticker.is_empty() {
            return Err(MemoParseError::MissingKey("ticker"));
        }
        if doc.persona.is_empty() {
            return Err(MemoParseError::MissingKey("persona"));
        }
        let mut current: Option<MemoSection> = None;
        let flush = |sec: Option<MemoSection>, doc: &mut MemoDocument| {
            if let Some(mut s) = sec {
                s.body = s.body.trim().to_string();
                if s.title == "Sources" {
                    doc.sources = parse_sources(&s.body);
                } else {
                    doc.sections.push(s);
                }
            }
        };
        for line in body.lines() {
            if let Some(t) = line.strip_prefix("## ") {
                flush(current.take(), &mut doc);
                current = Some(MemoSection {
                    title: t.trim().to_string(),
                    body: String::new(),
                });
            } else if let Some(t) = line.strip_prefix("# ") {
                if doc.title.is_empty() {
                    doc.title = t.trim().to_string();
                }
            } else if let Some(sec) = current.as_mut() {
                sec.body.push_str(line);
                sec.body.push('\n');
            }
        }
        flush(current.take(), &mut doc);
        Ok(doc)
    }

    /// Citation markers in section bodies, in order of first appearance.
    pub fn inline_citations(&self) -> Vec<ArtifactId> {
        let mut seen = BTreeSet::new();
        self.sections
            .iter()
            .flat_map(|s| citation_markers(&s.body))
            .filter(|id| seen.insert(id.clone()))
            .collect()
    }

    pub fn section(&self, title: &str) -> Option<&MemoSection> {
        self.sections
            .iter()
            .find(|s| s.title.eq_ignore_ascii_case(title))
    }
}

fn parse_sources(body: &str) -> Vec<SourceRef> {
    body.lines()
        .filter_map(|l| {
            let id = citation_markers(l).into_iter().next()?;
            let rest = l.split("]]").nth(1)?.trim();
            let (category, producer) = match rest.split_once(' ') {
                Some((c, p)) => (c, p.trim().trim_start_matches('(').trim_end_matches(')')),
                None => (rest, ""),
            };
            Some(SourceRef {
                id,
                category: category.to_string(),
                producer: producer.to_string(),
            })
        })
        .collect()
}

pub(super) struct AssembleMemo;

fn list_param(ctx: &TaskContext<'_>, key: &str) -> Vec<String> {
    match ctx.params.get(key) {
        Some(Value::Array(a)) => a
            .iter()
            .filter_map(|v| v.as_str().map(String::from))
            .collect(),
        Some(Value::String(s)) => s
            .split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect(),
        _ => Vec::new(),
    }
}

fn view(ctx: &TaskContext<'_>) -> Result<(ArtifactId, PersonaView), RunnerError> {
    let a = ctx
        .inputs("persona_view")
        .first()
        .ok_or_else(|| RunnerError::skill("empty-input", "assemble_memo needs a persona_view"))?;
    let v = a
        .json::<PersonaView>()
        .map_err(|e| RunnerError::skill("runner-error", format!("persona_view {}: {e}", a.id)))?;
    Ok((a.id.clone(), v))
}

fn headline(ctx: &TaskContext<'_>, v: &PersonaView) -> String {
    let ticker = ctx.ticker.unwrap_or("?");
    let who = v.persona.as_deref().unwrap_or("analyst");
    match &v.verdict {
        Some(verdict) => format!("{ticker}: {verdict} ({who} view)"),
        None => format!("{ticker}: research memo ({who} view)"),
    }
}

impl HybridSkill for AssembleMemo {
    fn schema(&self, _ctx: &TaskContext<'_>) -> OutputSchema {
        OutputSchema::new(
            "memo",
            vec![FieldSpec::text("headline").describe("a one-line memo title naming the ticker")],
        )
    }

    fn prompt(&self, ctx: &TaskContext<'_>) -> Result<String, RunnerError> {
        let passed = ctx
            .inputs("gate_report")
            .iter()
            .filter_map(|a| a.json::<GateDecision>().ok())
            .any(|g| g.passed);
        if !passed {
            return Err(RunnerError::skill("gate-closed", "no passing gate report"));
        }
        let (_, v) = view(ctx)?;
        for s in &v.sections {
            for id in citation_markers(&s.body) {
                if !ctx.store.contains(&id) {
                    return Err(RunnerError::UnresolvedCitation(format!(
                        "section `{}` cites {id}, which is not in the evidence store",
                        s.title
                    )));
                }
            }
        }
        let mut p = format!("## headline\n{}\n\n## Draft\n", headline(ctx, &v));
        for s in &v.sections {
            p.push_str(&format!("### {}\n{}\n", s.title, s.body.trim()));
        }
        Ok(p)
    }

    fn verify(&self, ctx: &TaskContext<'_>, output: &Map<String, Value>) -> VerifierReport {
        let mut report = VerifierReport::pass();
        let Ok((_, v)) = view(ctx) else {
            report.push("", "input", "persona_view unreadable");
            return report;
        };
        for required in list_param(ctx, "required_sections") {
            if required.eq_ignore_ascii_case("sources") {
                continue;
            }
            if !v
                .sections
                .iter()
                .any(|s| s.title.eq_ignore_ascii_case(&required))
            {
                report.push(
                    &format!("sections.{required}"),
                    "missing-section",
                    format!("template requires a `{required}` section"),
                );
            }
        }
        let verdict_required =
            ctx.params.get("verdict_required").and_then(Value::as_bool) == Some(true);
        match &v.verdict {
            None if verdict_required => {
                report.push("verdict", "required", "template requires a verdict")
            }
            Some(x) if !VERDICTS.contains(&x.as_str()) => {
                report.push("verdict", "enum", format!("`{x}` is not a verdict"))
            }
            _ => {}
        }
        if output
            .get("headline")
            .and_then(Value::as_str)
            .is_none_or(|h| h.trim().is_empty())
        {
            report.push("headline", "required", "headline must not be blank");
        }
        report
    }

    fn accept(
        &self,
        ctx: &mut TaskContext<'_>,
        output: Map<String, Value>,
    ) -> Result<(), RunnerError> {
        let (view_id, v) = view(ctx)?;
        let sections: Vec<MemoSection> = v
            .sections
            .iter()
            .filter(|s| !s.title.eq_ignore_ascii_case("sources"))
            .map(|s| MemoSection {
                title: s.title.clone(),
                body: s.body.clone(),
            })
            .collect();

        // Sources: the cited artifacts plus their evidence ancestors.
        let mut ids: BTreeSet<ArtifactId> = BTreeSet::new();
        ids.insert(view_id.clone());
        for s in &sections {
            for id in citation_markers(&s.body) {
                if let Ok(lineage) = ctx.store.lineage(&id) {
                    ids.extend(lineage.nodes);
                }
            }
        }
        let mut sources: Vec<SourceRef> = ids
            .iter()
            .filter_map(|id| ctx.store.get(id))
            .filter(|a| a.category.as_str() != "coverage_brief")
            .map(|a| SourceRef {
                id: a.id.clone(),
                category: a.category.to_string(),
                producer: a.producer_skill.clone(),
            })
            .collect();
        sources.sort_by(|a, b| (&a.category, &a.id).cmp(&(&b.category, &b.id)));

        let memo = MemoDocument {
            title: output["headline"]
                .as_str()
                .unwrap_or_default()
                .trim()
                .to_string(),
            ticker: ctx.require_ticker()?.to_uppercase(),
            persona: ctx
                .param_str("persona_id")
                .map(String::from)
                .or_else(|| v.persona.clone())
                .unwrap_or_default(),
            workflow: ctx.param_str("workflow_id").unwrap_or_default().to_string(),
            engagement: ctx.engagement_id.to_string(),
            themes: v.themes.clone(),
            also_covers: list_param(ctx, "also_covers"),
            verdict: v.verdict.clone(),
            sections,
            sources,
        };
        let mut parents: Vec<ArtifactId> = vec![view_id];
        for cat in ["kpis", "segments", "market_snapshot", "news", "gate_report"] {
            parents.extend(ctx.inputs(cat).iter().map(|a| a.id.clone()));
        }
        ctx.emit(ArtifactDraft::text("memo", memo.to_markdown()).parents(parents))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markdown_round_trips() {
        let doc = MemoDocument {
            title: "AAPL: services mix".into(),
            ticker: "AAPL".into(),
            persona: "value".into(),
            workflow: "pitch-memo".into(),
            engagement: "eng-0001-00000000".into(),
            themes: vec!["Rate Sensitivity".into()],
            also_covers: vec!["MSFT".into()],
            verdict: Some("Hold".into()),
            sections: vec![MemoSection {
                title: "Thesis".into(),
                body: "Margins hold [[artifact:abc123]].".into(),
            }],
            sources: vec![SourceRef {
                id: ArtifactId::new("abc123"),
                category: "kpis".into(),
                producer: "extract_KPIs".into(),
            }],
        };
        let md = doc.to_markdown();
        assert_eq!(MemoDocument::parse(&md).unwrap(), doc);
        assert_eq!(doc.inline_citations(), vec![ArtifactId::new("abc123")]);
    }

    #[test]
    fn missing_front_matter_is_rejected() {
        assert_eq!(
            MemoDocument::parse("# hi\n"),
            Err(MemoParseError::NoFrontMatter)
        );
    }
}
