//! Built-in skills: coverage brief, the three ingest fetchers, KPI extraction,
//! segment parsing, the source-quality gate, memo assembly and graph-facts
//! write-back. Persona compose skills are agent skills and live in packs.

mod brief;
pub mod edgar;
pub mod filings;
mod gate;
pub mod kg_update;
mod kpis;
mod market;
pub mod memo;
mod news;
mod segments;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::runners::{Builtins, RunnerError};

pub use brief::CoverageBrief;
pub use edgar::{EdgarClient, HttpTransport, ReqwestTransport, TransportError};
pub use filings::{parse_sections, FilingDocument, SECTION_NAMES};
pub use gate::{GateDecision, GateMiss};
pub use kg_update::{normalize_theme, GraphFacts, ThemeRef};
pub use kpis::{KpiSet, Metric};
pub use market::MarketSnapshot;
pub use memo::{MemoDocument, MemoSection};
pub use news::NewsItem;
pub use segments::{FilingSegments, SectionSpan, SegmentSet};

/// Where ingest skills get their data from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    #[default]
    Fixture,
    Live,
}

impl SourceMode {
    pub fn from_param(v: Option<&str>) -> Self {
        match v {
            Some("live") => SourceMode::Live,
            _ => SourceMode::Fixture,
        }
    }
}

/// Process-wide resources the built-in skills share.
#[derive(Clone, Default)]
pub struct SkillEnv {
    pub fixtures_dir: PathBuf,
    pub edgar: Option<Arc<EdgarClient>>,
}

impl SkillEnv {
    pub fn new(fixtures_dir: impl Into<PathBuf>) -> Self {
        Self {
            fixtures_dir: fixtures_dir.into(),
            edgar: None,
        }
    }

    pub fn with_edgar(mut self, client: Arc<EdgarClient>) -> Self {
        self.edgar = Some(client);
        self
    }

    pub fn ticker_dir(&self, ticker: &str) -> PathBuf {
        self.fixtures_dir.join(ticker.to_uppercase())
    }

    pub fn has_fixture(&self, ticker: &str) -> bool {
        self.ticker_dir(ticker).is_dir()
    }

    /// Tickers with a fixture directory, sorted.
    pub fn fixture_tickers(&self) -> Vec<String> {
        let mut out: Vec<String> = std::fs::read_dir(&self.fixtures_dir)
            .map(|rd| {
                rd.filter_map(|e| e.ok())
                    .filter(|e| e.path().is_dir())
                    .map(|e| e.file_name().to_string_lossy().into_owned())
                    .collect()
            })
            .unwrap_or_default();
        out.sort();
        out
    }
}

/// The registry of host implementations for every shipped skill manifest.
pub fn builtins() -> Builtins {
    let mut b = Builtins::new();
    b.register_deterministic("coverage_brief", brief::run);
    b.register_deterministic("fetch_filings", filings::run);
    b.register_deterministic("fetch_market", market::run);
    b.register_deterministic("fetch_news", news::run);
    b.register_deterministic("kg_update", kg_update::run);
    b.register_hybrid("extract_kpis", Arc::new(kpis::ExtractKpis));
    b.register_hybrid("parse_segments", Arc::new(segments::ParseSegments));
    b.register_hybrid("gate_check", Arc::new(gate::GateCheck));
    b.register_hybrid("assemble_memo", Arc::new(memo::AssembleMemo));
    b
}

/// Parses amounts as written in filings: `215.9 billion`, `65%`, `1,234.5`.
/// Scaling is done textually so `62.3 billion` is exactly `62.3e9`.
pub fn parse_amount(text: &str) -> Option<f64> {
    let t = text.trim().trim_start_matches('$').replace(',', "");
    let (num, exp) = if let Some(n) = t.strip_suffix('%') {
        (n.trim().to_string(), "e-2")
    } else {
        let mut parts = t.split_whitespace();
        let n = parts.next()?.to_string();
        let exp = match parts.next().map(str::to_ascii_lowercase).as_deref() {
            None => "",
            Some("thousand") => "e3",
            Some("million") => "e6",
            Some("billion") => "e9",
            Some("trillion") => "e12",
            Some(_) => return None,
        };
        (n, exp)
    };
    if num.is_empty()
        || !num
            .chars()
            .all(|c| c.is_ascii_digit() || c == '.' || c == '-' || c == 'e' || c == 'E' || c == '+')
    {
        return None;
    }
    if exp.is_empty() {
        return num.parse().ok();
    }
    if num.contains(['e', 'E']) {
        return None;
    }
    format!("{num}{exp}").parse().ok()
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, RunnerError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunnerError::skill("runner-error", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| RunnerError::skill("runner-error", format!("{}: {e}", path.display())))
}

pub(crate) fn sorted_files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|x| x.to_str()) == Some(ext))
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

pub(crate) fn to_draft_err(e: serde_json::Error) -> RunnerError {
    RunnerError::skill("runner-error", e.to_string())
}
