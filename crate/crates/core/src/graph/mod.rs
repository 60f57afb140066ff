//! The research graph, rebuilt from `graph_facts` artifacts on every query.
//!
//! Nodes are tickers, memos, analysts (personas) and themes. Edges are
//! `wrote` (analyst → memo), `covers` (memo → ticker), `explores`
//! (memo → theme) and `cites` (memo → memo). Node ids are `<kind>:<key>`.

mod fixture;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::skills::{normalize_theme, GraphFacts};
use crate::store::{ArtifactFilter, ArtifactId, EvidenceStore};

pub use fixture::{seed_memo_fixture, FIXTURE_ENGAGEMENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Ticker,
    Memo,
    Analyst,
    Theme,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Ticker => "ticker",
            NodeKind::Memo => "memo",
            NodeKind::Analyst => "analyst",
            NodeKind::Theme => "theme",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Wrote,
    Covers,
    Explores,
    Cites,
}

impl EdgeKind {
    /// The fixed (from, to) endpoint kinds.
    pub fn endpoints(self) -> (NodeKind, NodeKind) {
        match self {
            EdgeKind::Wrote => (NodeKind::Analyst, NodeKind::Memo),
            EdgeKind::Covers => (NodeKind::Memo, NodeKind::Ticker),
            EdgeKind::Explores => (NodeKind::Memo, NodeKind::Theme),
            EdgeKind::Cites => (NodeKind::Memo, NodeKind::Memo),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub key: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, Value>,
}

impl Node {
    pub fn id(&self) -> String {
        node_id(self.kind, &self.key)
    }
}

pub fn node_id(kind: NodeKind, key: &str) -> String {
    format!("{}:{key}", kind.as_str())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphEdge {
    pub kind: EdgeKind,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchGraph {
    pub built_from: usize,
    /// Sorted by (kind, key).
    pub nodes: Vec<Node>,
    /// Sorted by (kind, from, to).
    pub edges: Vec<GraphEdge>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("unknown-theme: {0}")]
    UnknownTheme(String),
    #[error("unknown-memo: {0}")]
    UnknownMemo(String),
    #[error("unknown-ticker: {0}")]
    UnknownTicker(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapRow {
    pub ticker: String,
    pub personas: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeView {
    pub theme: String,
    pub display: String,
    pub memos: Vec<String>,
    pub tickers: Vec<String>,
    pub analysts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrailEntry {
    pub id: ArtifactId,
    pub category: String,
    pub producer: String,
    /// Distance from the memo in the lineage walk.
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompareRow {
    pub persona: String,
    pub memo_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    pub created_at: DateTime<Utc>,
    pub title: String,
    pub workflow: String,
}

#[derive(Default)]
struct Builder {
    nodes: BTreeMap<(NodeKind, String), Node>,
    edges: BTreeSet<GraphEdge>,
}

impl Builder {
    fn node(&mut self, kind: NodeKind, key: &str) -> &mut Node {
        self.nodes
            .entry((kind, key.to_string()))
            .or_insert_with(|| Node {
                kind,
                key: key.to_string(),
                attributes: BTreeMap::new(),
            })
    }

    fn edge(&mut self, kind: EdgeKind, from: (NodeKind, &str), to: (NodeKind, &str)) {
        debug_assert_eq!(kind.endpoints(), (from.0, to.0));
        self.edges.insert(GraphEdge {
            kind,
            from: node_id(from.0, from.1),
            to: node_id(to.0, to.1),
        });
    }
}

impl ResearchGraph {
    /// Derives the graph from the store's `graph_facts` artifacts. Facts whose
    /// memo is missing, and cites to memos without facts, become warnings.
    pub fn rebuild(store: &EvidenceStore) -> Self {
        let built_from = store.snapshot_marker();
        let mut warnings = Vec::new();
        let mut facts: Vec<(ArtifactId, GraphFacts)> = Vec::new();
        for a in store.query(&ArtifactFilter::category("graph_facts")) {
            match a.json::<GraphFacts>() {
                Ok(f) => facts.push((a.id.clone(), f)),
                Err(e) => warnings.push(format!("graph_facts {} unreadable: {e}", a.id)),
            }
        }
        facts.sort_by(|a, b| (&a.1.memo_id, &a.0).cmp(&(&b.1.memo_id, &b.0)));
        facts.dedup_by(|b, a| a.1.memo_id == b.1.memo_id);

        let mut known: BTreeSet<ArtifactId> = BTreeSet::new();
        let mut kept = Vec::new();
        for (fid, f) in facts {
            match store.get(&f.memo_id) {
                Some(m) if m.category.as_str() == "memo" => {
                    known.insert(f.memo_id.clone());
                    kept.push(f);
                }
                _ => warnings.push(format!(
                    "graph_facts {fid} references unknown memo {}",
                    f.memo_id
                )),
            }
        }

        let mut b = Builder::default();
        for f in &kept {
            let memo = f.memo_id.as_str();
            let attrs = &mut b.node(NodeKind::Memo, memo).attributes;
            attrs.insert("title".into(), json!(f.title));
            attrs.insert("ticker".into(), json!(f.ticker));
            attrs.insert("persona".into(), json!(f.persona));
            attrs.insert("created_at".into(), json!(f.created_at));
            attrs.insert("engagement_id".into(), json!(f.engagement_id));
            attrs.insert("workflow".into(), json!(f.workflow));
            if let Some(v) = &f.verdict {
                attrs.insert("verdict".into(), json!(v));
            }
            b.node(NodeKind::Analyst, &f.persona);
            b.edge(
                EdgeKind::Wrote,
                (NodeKind::Analyst, &f.persona),
                (NodeKind::Memo, memo),
            );
            let mut tickers = vec![f.ticker.clone()];
            tickers.extend(f.also_covers.iter().cloned());
            for t in &tickers {
                b.node(NodeKind::Ticker, t);
                b.edge(
                    EdgeKind::Covers,
                    (NodeKind::Memo, memo),
                    (NodeKind::Ticker, t),
                );
            }
            for theme in &f.themes {
                let key = normalize_theme(&theme.key);
                b.node(NodeKind::Theme, &key)
                    .attributes
                    .entry("display".into())
                    .or_insert_with(|| json!(theme.display));
                b.edge(
                    EdgeKind::Explores,
                    (NodeKind::Memo, memo),
                    (NodeKind::Theme, &key),
                );
            }
            for cited in &f.cites {
                if known.contains(cited) {
                    b.edge(
                        EdgeKind::Cites,
                        (NodeKind::Memo, memo),
                        (NodeKind::Memo, cited.as_str()),
                    );
                } else {
                    warnings.push(format!(
                        "memo {memo} cites {cited}, which has no graph facts"
                    ));
                }
            }
        }
        Self {
            built_from,
            nodes: b.nodes.into_values().collect(),
            edges: b.edges.into_iter().collect(),
            warnings,
        }
    }

    pub fn node(&self, kind: NodeKind, key: &str) -> Option<&Node> {
        self.nodes
            .binary_search_by(|n| (n.kind, n.key.as_str()).cmp(&(kind, key)))
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes_of(kind).count()
    }

    pub fn has_edge(&self, kind: EdgeKind, from: &str, to: &str) -> bool {
        self.edges
            .binary_search(&GraphEdge {
                kind,
                from: from.to_string(),
                to: to.to_string(),
            })
            .is_ok()
    }

    fn targets<'a>(&'a self, kind: EdgeKind, from: &'a str) -> impl Iterator<Item = &'a str> {
        self.edges
            .iter()
            .filter(move |e| e.kind == kind && e.from == from)
            .map(|e| e.to.as_str())
    }

    fn sources<'a>(&'a self, kind: EdgeKind, to: &'a str) -> impl Iterator<Item = &'a str> {
        self.edges
            .iter()
            .filter(move |e| e.kind == kind && e.to == to)
            .map(|e| e.from.as_str())
    }

    /// Every edge joins existing nodes of the kinds its type requires.
    pub fn check_invariants(&self) -> Vec<String> {
        let ids: BTreeMap<String, NodeKind> = self.nodes.iter().map(|n| (n.id(), n.kind)).collect();
        let mut problems = Vec::new();
        for e in &self.edges {
            let (fk, tk) = e.kind.endpoints();
            match (ids.get(&e.from), ids.get(&e.to)) {
                (Some(f), Some(t)) if *f == fk && *t == tk => {}
                (Some(_), Some(_)) => problems.push(format!(
                    "{:?} edge {} -> {} has wrong endpoint kinds",
                    e.kind, e.from, e.to
                )),
                _ => problems.push(format!(
                    "{:?} edge {} -> {} is dangling",
                    e.kind, e.from, e.to
                )),
            }
        }
        for m in self.nodes_of(NodeKind::Memo) {
            for k in ["ticker", "persona", "created_at"] {
                if !m.attributes.contains_key(k) {
                    problems.push(format!("memo {} lacks {k}", m.key));
                }
            }
        }
        problems
    }

    /// Canonical export: `built_from`, `nodes`, `edges`.
    pub fn export(&self) -> String {
        let doc = json!({
            "built_from": self.built_from,
            "nodes": self.nodes,
            "edges": self.edges,
        });
        serde_json::to_string_pretty(&doc).expect("graph serializes")
    }

    /// Tickers whose memos come from at most one distinct persona.
    pub fn gap_report(&self) -> Vec<GapRow> {
        self.nodes_of(NodeKind::Ticker)
            .filter_map(|t| {
                let tid = t.id();
                let personas: BTreeSet<String> = self
                    .sources(EdgeKind::Covers, &tid)
                    .flat_map(|memo| self.sources(EdgeKind::Wrote, memo))
                    .map(|a| a.trim_start_matches("analyst:").to_string())
                    .collect();
                (personas.len() <= 1).then(|| GapRow {
                    ticker: t.key.clone(),
                    personas: personas.into_iter().collect(),
                })
            })
            .collect()
    }

    pub fn theme_view(&self, theme: &str) -> Result<ThemeView, GraphError> {
        let key = normalize_theme(theme);
        let node = self
            .node(NodeKind::Theme, &key)
            .ok_or_else(|| GraphError::UnknownTheme(theme.to_string()))?;
        let tid = node.id();
        let memos: BTreeSet<&str> = self.sources(EdgeKind::Explores, &tid).collect();
        let strip = |s: &str, k: NodeKind| {
            s.trim_start_matches(&format!("{}:", k.as_str()))
                .to_string()
        };
        let tickers: BTreeSet<String> = memos
            .iter()
            .flat_map(|m| self.targets(EdgeKind::Covers, m))
            .map(|t| strip(t, NodeKind::Ticker))
            .collect();
        let analysts: BTreeSet<String> = memos
            .iter()
            .flat_map(|m| self.sources(EdgeKind::Wrote, m))
            .map(|a| strip(a, NodeKind::Analyst))
            .collect();
        Ok(ThemeView {
            display: node
                .attributes
                .get("display")
                .and_then(Value::as_str)
                .unwrap_or(&key)
                .to_string(),
            theme: key.clone(),
            memos: memos.iter().map(|m| strip(m, NodeKind::Memo)).collect(),
            tickers: tickers.into_iter().collect(),
            analysts: analysts.into_iter().collect(),
        })
    }

    /// One row per memo covering `ticker`, newest first (ties by memo id).
    pub fn compare_views(&self, ticker: &str) -> Result<Vec<CompareRow>, GraphError> {
        let t = ticker.to_uppercase();
        let node = self
            .node(NodeKind::Ticker, &t)
            .ok_or_else(|| GraphError::UnknownTicker(ticker.to_string()))?;
        let tid = node.id();
        let mut rows: Vec<CompareRow> = self
            .sources(EdgeKind::Covers, &tid)
            .filter_map(|m| self.node(NodeKind::Memo, m.trim_start_matches("memo:")))
            .map(|m| {
                let s = |k: &str| {
                    m.attributes
                        .get(k)
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .to_string()
                };
                CompareRow {
                    persona: s("persona"),
                    memo_id: m.key.clone(),
                    verdict: m
                        .attributes
                        .get("verdict")
                        .and_then(Value::as_str)
                        .map(String::from),
                    created_at: m
                        .attributes
                        .get("created_at")
                        .and_then(|v| serde_json::from_value(v.clone()).ok())
                        .unwrap_or_default(),
                    title: s("title"),
                    workflow: s("workflow"),
                }
            })
            .collect();
        rows.sort_by(|a, b| {
            b.created_at
                .cmp(&a.created_at)
                .then_with(|| a.memo_id.cmp(&b.memo_id))
        });
        Ok(rows)
    }

    /// The memo's evidence lineage, breadth-first from the memo.
    pub fn provenance_chain(
        &self,
        store: &EvidenceStore,
        memo: &str,
    ) -> Result<Vec<TrailEntry>, GraphError> {
        if self.node(NodeKind::Memo, memo).is_none() {
            return Err(GraphError::UnknownMemo(memo.to_string()));
        }
        provenance_trail(store, &ArtifactId::new(memo))
    }
}

/// Lineage of any stored artifact annotated with categories, breadth-first.
pub fn provenance_trail(
    store: &EvidenceStore,
    id: &ArtifactId,
) -> Result<Vec<TrailEntry>, GraphError> {
    let lineage = store
        .lineage(id)
        .map_err(|_| GraphError::UnknownMemo(id.to_string()))?;
    let mut depth: BTreeMap<ArtifactId, usize> = BTreeMap::new();
    depth.insert(id.clone(), 0);
    let mut out = Vec::new();
    for n in &lineage.nodes {
        let d = depth.get(n).copied().unwrap_or(0);
        if let Some(a) = store.get(n) {
            for p in &a.parent_ids {
                depth.entry(p.clone()).or_insert(d + 1);
            }
            out.push(TrailEntry {
                id: n.clone(),
                category: a.category.to_string(),
                producer: a.producer_skill.clone(),
                depth: d,
            });
        }
    }
    Ok(out)
}

impl fmt::Display for ResearchGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} tickers, {} memos, {} analysts, {} themes, {} edges",
            self.count(NodeKind::Ticker),
            self.count(NodeKind::Memo),
            self.count(NodeKind::Analyst),
            self.count(NodeKind::Theme),
            self.edges.len()
        )
    }
}
