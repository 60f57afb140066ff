//! `KG_update`: turns a memo into a normalized facts record. The research
//! graph is rebuilt from these records, never mutated in place.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::memo::MemoDocument;
use super::to_draft_err;
use crate::runners::{RunnerError, TaskContext};
use crate::store::{ArtifactDraft, ArtifactId, EvidenceStore};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ThemeRef {
    pub key: String,
    pub display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFacts {
    pub memo_id: ArtifactId,
    pub ticker: String,
    #[serde(default)]
    pub also_covers: Vec<String>,
    pub persona: String,
    #[serde(default)]
    pub themes: Vec<ThemeRef>,
    /// Other memos this memo cites.
    #[serde(default)]
    pub cites: Vec<ArtifactId>,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub workflow: String,
    #[serde(default)]
    pub engagement_id: String,
}

/// `"Rate Sensitivity"` → `rate_sensitivity`.
pub fn normalize_theme(theme: &str) -> String {
    let mut out = String::new();
    for c in theme.trim().chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

/// Derives facts for the memo stored as `memo_id`.
pub fn facts_from_memo(
    memo_id: &ArtifactId,
    markdown: &str,
    created_at: DateTime<Utc>,
    store: &EvidenceStore,
) -> Result<GraphFacts, RunnerError> {
    let doc = MemoDocument::parse(markdown)
        .map_err(|e| RunnerError::skill("malformed-memo", e.to_string()))?;
    let mut cites = Vec::new();
    for id in doc.inline_citations() {
        if &id == memo_id {
            return Err(RunnerError::skill(
                "malformed-memo",
                format!("memo {memo_id} cites itself"),
            ));
        }
        if store
            .get(&id)
            .is_some_and(|a| a.category.as_str() == "memo")
        {
            cites.push(id);
        }
    }
    let mut themes: Vec<ThemeRef> = doc
        .themes
        .iter()
        .map(|t| ThemeRef {
            key: normalize_theme(t),
            display: t.trim().to_string(),
        })
        .filter(|t| !t.key.is_empty())
        .collect();
    themes.sort();
    themes.dedup_by(|a, b| a.key == b.key);
    Ok(GraphFacts {
        memo_id: memo_id.clone(),
        ticker: doc.ticker.to_uppercase(),
        also_covers: doc.also_covers.iter().map(|t| t.to_uppercase()).collect(),
        persona: doc.persona,
        themes,
        cites,
        created_at,
        verdict: doc.verdict,
        title: doc.title,
        workflow: doc.workflow,
        engagement_id: doc.engagement,
    })
}

pub(super) fn run(ctx: &mut TaskContext<'_>) -> Result<(), RunnerError> {
    let memos = ctx.inputs("memo").to_vec();
    if memos.is_empty() {
        return Err(RunnerError::skill("empty-input", "kg_update needs a memo"));
    }
    for memo in memos {
        let facts = facts_from_memo(&memo.id, &memo.payload, memo.created_at, ctx.store)?;
        ctx.emit(
            ArtifactDraft::structured("graph_facts", &facts)
                .map_err(to_draft_err)?
                .parents([memo.id.clone()]),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::Clock;
    use std::sync::Arc;

    #[test]
    fn themes_normalize() {
        assert_eq!(normalize_theme("Rate Sensitivity"), "rate_sensitivity");
        assert_eq!(normalize_theme(" AI  infra!"), "ai_infra");
        assert_eq!(normalize_theme("ai_infra"), "ai_infra");
    }

    #[test]
    fn self_cite_is_malformed() {
        let store = EvidenceStore::in_memory(Arc::new(Clock::logical()));
        let md = "---\nticker: AAPL\npersona: macro\n---\n# t\n\n## Body\nsee [[artifact:abc]]\n";
        let err = facts_from_memo(&ArtifactId::new("abc"), md, Utc::now(), &store).unwrap_err();
        assert_eq!(err.tag(), "malformed-memo");
        let ok = facts_from_memo(&ArtifactId::new("def"), md, Utc::now(), &store).unwrap();
        assert!(ok.themes.is_empty() && ok.cites.is_empty());
    }
}
