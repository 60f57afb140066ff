//! Shared vocabulary: artifact categories, execution phases and runner kinds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Categories every shipped skill agrees on. Other categories may be
/// registered; they are legal but the registry warns about them.
pub const CANONICAL_CATEGORIES: &[&str] = &[
    "coverage_brief",
    "filings",
    "market_snapshot",
    "news",
    "transcripts",
    "segments",
    "kpis",
    "gate_report",
    "persona_view",
    "memo",
    "graph_facts",
];

/// Written by the dispatcher when a gate closes an engagement early.
pub const BRIEF_ASSESSMENT: &str = "brief_assessment";

/// Intermediate records of the persona distillation chain, in chain order.
pub const DISTILLATION_CATEGORIES: &[&str] = &[
    "source_corpus",
    "structured_material",
    "persona_document",
    "skill_spec",
    "persona_pack",
];

/// Inputs a consumer may receive as an empty list. A failed or missing
/// producer of one of these never blocks the consumer.
pub const OPTIONAL_CATEGORIES: &[&str] = &["news", "transcripts"];

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid category identifier `{0}`: expected [a-z][a-z0-9_]*")]
pub struct InvalidCategory(pub String);

/// A lowercase snake-case artifact category such as `filings` or `kpis`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CategoryId(String);

impl CategoryId {
    pub fn new(value: impl Into<String>) -> Result<Self, InvalidCategory> {
        let value = value.into();
        if is_valid_identifier(&value) {
            Ok(Self(value))
        } else {
            Err(InvalidCategory(value))
        }
    }

    /// Builds a category from a literal known to be valid.
    ///
    /// Panics on an invalid literal; meant for constants in code.
    pub fn from_static(value: &'static str) -> Self {
        Self::new(value).expect("static category literal must be valid")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_canonical(&self) -> bool {
        CANONICAL_CATEGORIES.contains(&self.0.as_str())
            || self.0 == BRIEF_ASSESSMENT
            || DISTILLATION_CATEGORIES.contains(&self.0.as_str())
    }

    pub fn is_optional(&self) -> bool {
        OPTIONAL_CATEGORIES.contains(&self.0.as_str())
    }
}

fn is_valid_identifier(value: &str) -> bool {
    let mut chars = value.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl TryFrom<String> for CategoryId {
    type Error = InvalidCategory;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<CategoryId> for String {
    fn from(value: CategoryId) -> Self {
        value.0
    }
}

impl FromStr for CategoryId {
    type Err = InvalidCategory;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<str> for CategoryId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for CategoryId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// The five ordered execution phases. Derived ordering is the phase order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Setup,
    Ingest,
    Analyze,
    Compose,
    Maintain,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Setup,
        Phase::Ingest,
        Phase::Analyze,
        Phase::Compose,
        Phase::Maintain,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Setup => "setup",
            Phase::Ingest => "ingest",
            Phase::Analyze => "analyze",
            Phase::Compose => "compose",
            Phase::Maintain => "maintain",
        }
    }

    /// The label the console shows for this phase, matched by position.
    pub fn ui_label(self) -> &'static str {
        match self {
            Phase::Setup => "Planner",
            Phase::Ingest => "Ingestion",
            Phase::Analyze => "Analyze",
            Phase::Compose => "Memo",
            Phase::Maintain => "Workflow",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Phase::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown phase `{s}`"))
    }
}

/// Execution strategy behind a skill contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunnerKind {
    Deterministic,
    Hybrid,
    Agent,
}

impl RunnerKind {
    pub const ALL: [RunnerKind; 3] = [
        RunnerKind::Deterministic,
        RunnerKind::Hybrid,
        RunnerKind::Agent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RunnerKind::Deterministic => "deterministic",
            RunnerKind::Hybrid => "hybrid",
            RunnerKind::Agent => "agent",
        }
    }
}

impl fmt::Display for RunnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_identifier_rules() {
        assert!(CategoryId::new("market_snapshot").is_ok());
        assert!(CategoryId::new("k2").is_ok());
        assert!(CategoryId::new("").is_err());
        assert!(CategoryId::new("2k").is_err());
        assert!(CategoryId::new("Filings").is_err());
        assert!(CategoryId::new("with-dash").is_err());
    }

    #[test]
    fn category_serde_rejects_invalid() {
        let ok: CategoryId = serde_json::from_str("\"news\"").unwrap();
        assert_eq!(ok, "news");
        assert!(serde_json::from_str::<CategoryId>("\"Bad\"").is_err());
    }

    #[test]
    fn phases_are_ordered() {
        assert!(Phase::Setup < Phase::Ingest);
        assert!(Phase::Compose < Phase::Maintain);
        assert_eq!("analyze".parse::<Phase>().unwrap(), Phase::Analyze);
        assert!("planner".parse::<Phase>().is_err());
        assert!(serde_json::from_str::<Phase>("\"workflow\"").is_err());
    }
}
