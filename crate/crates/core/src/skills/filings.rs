//! `fetch_filings` and the filing section parser.
//!
//! Each filing yields two `filings` artifacts: the raw document text and a
//! structured [`FilingDocument`] whose parent is the raw artifact.
//!
//! Fixture files carry a small header before the body:
//!
//! ```text
//! FORM: 10-K
//! ACCESSION: 0001045810-26-000021
//! FILED: 2026-02-25
//! TICKER: NVDA
//! ---
//! Item 1. Business
//! ...
//! ```

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{sorted_files, to_draft_err, SourceMode};
use crate::runners::{RunnerError, TaskContext};
use crate::store::{ArtifactDraft, ArtifactFilter, ArtifactId, PayloadKind};

pub const SECTION_NAMES: [&str; 3] = ["business_overview", "risk_factors", "mdna"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilingDocument {
    pub ticker: String,
    #[serde(default)]
    pub company: String,
    pub form_type: String,
    pub accession: String,
    pub filed: String,
    #[serde(default)]
    pub period: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    pub raw_artifact: ArtifactId,
    pub sections: BTreeMap<String, String>,
}

fn heading_patterns() -> &'static [(&'static str, Regex)] {
    static RE: OnceLock<Vec<(&'static str, Regex)>> = OnceLock::new();
    RE.get_or_init(|| {
        vec![
            (
                "business_overview",
                Regex::new(r"(?mi)^[ \t]*item\s+1\.\s*business\b[^\n]*$").unwrap(),
            ),
            (
                "risk_factors",
                Regex::new(r"(?mi)^[ \t]*item\s+1a\.\s*risk\s+factors\b[^\n]*$").unwrap(),
            ),
            (
                "mdna",
                Regex::new(r"(?mi)^[ \t]*item\s+7\.\s*management(?:'|’)?s\s+discussion[^\n]*$")
                    .unwrap(),
            ),
        ]
    })
}

fn any_item_heading() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?mi)^[ \t]*item\s+\d+[a-z]?\.").unwrap())
}

/// Byte spans `(name, start, end)` of the known sections in `text`, trimmed of
/// surrounding whitespace. Where a heading repeats (tables of contents), the
/// occurrence with the longest body wins.
pub fn parse_sections(text: &str) -> Vec<(String, usize, usize)> {
    let boundaries: Vec<usize> = any_item_heading()
        .find_iter(text)
        .map(|m| m.start())
        .collect();
    let mut out = Vec::new();
    for (name, re) in heading_patterns() {
        let best = re
            .find_iter(text)
            .map(|m| {
                let end = boundaries
                    .iter()
                    .copied()
                    .find(|b| *b > m.start())
                    .unwrap_or(text.len());
                trim_span(text, m.end(), end.max(m.end()))
            })
            .max_by_key(|(s, e)| e - s);
        if let Some((s, e)) = best {
            if e > s {
                out.push((name.to_string(), s, e));
            }
        }
    }
    out
}

fn trim_span(text: &str, mut start: usize, mut end: usize) -> (usize, usize) {
    let bytes = text.as_bytes();
    while start < end && bytes[start].is_ascii_whitespace() {
        start += 1;
    }
    while end > start && bytes[end - 1].is_ascii_whitespace() {
        end -= 1;
    }
    (start, end)
}

/// Best-effort conversion of an HTML filing to text; other input is returned as is.
pub fn plain_text(raw: &str) -> String {
    let head = &raw[..raw.len().min(2048)].to_ascii_lowercase();
    if !(head.contains("<html") || head.contains("<div") || head.contains("<?xml")) {
        return raw.to_string();
    }
    static TAGS: OnceLock<Regex> = OnceLock::new();
    static BLOCKS: OnceLock<Regex> = OnceLock::new();
    static SPACES: OnceLock<Regex> = OnceLock::new();
    let blocks = BLOCKS.get_or_init(|| Regex::new(r"(?i)</(p|div|tr|h\d|li)>|<br\s*/?>").unwrap());
    let tags = TAGS.get_or_init(|| Regex::new(r"(?s)<[^>]*>").unwrap());
    let spaces = SPACES.get_or_init(|| Regex::new(r"[ \t]+").unwrap());
    let text = blocks.replace_all(raw, "\n");
    let text = tags.replace_all(&text, "");
    let text = text
        .replace("&nbsp;", " ")
        .replace("&#160;", " ")
        .replace("&amp;", "&")
        .replace("&#8217;", "’")
        .replace("&#39;", "'")
        .replace("&quot;", "\"")
        .replace("&lt;", "<")
        .replace("&gt;", ">");
    spaces
        .replace_all(&text, " ")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Splits a fixture file into header fields and body.
pub fn split_header(text: &str) -> (BTreeMap<String, String>, &str) {
    let mut header = BTreeMap::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        offset += line.len();
        let l = line.trim();
        if l == "---" {
            return (header, &text[offset..]);
        }
        if let Some((k, v)) = l.split_once(':') {
            header.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
    }
    (BTreeMap::new(), text)
}

pub(super) fn run(ctx: &mut TaskContext<'_>) -> Result<(), RunnerError> {
    let ticker = ctx.require_ticker()?.to_uppercase();
    match SourceMode::from_param(ctx.param_str("source_mode")) {
        SourceMode::Fixture => run_fixture(ctx, &ticker),
        SourceMode::Live => run_live(ctx, &ticker),
    }
}

fn brief_parents(ctx: &TaskContext<'_>) -> Vec<ArtifactId> {
    ctx.inputs("coverage_brief")
        .iter()
        .map(|a| a.id.clone())
        .collect()
}

fn run_fixture(ctx: &mut TaskContext<'_>, ticker: &str) -> Result<(), RunnerError> {
    let dir = ctx.env.ticker_dir(ticker);
    if !dir.is_dir() {
        return Err(RunnerError::skill(
            "unknown-ticker",
            format!("no fixtures for {ticker}"),
        ));
    }
    let files = sorted_files(&dir.join("filings"), "txt");
    if files.is_empty() {
        return Err(RunnerError::skill(
            "empty-fixture",
            format!("{} holds no filings", dir.join("filings").display()),
        ));
    }
    for file in files {
        let raw = std::fs::read_to_string(&file)
            .map_err(|e| RunnerError::skill("runner-error", format!("{}: {e}", file.display())))?;
        let (header, _) = split_header(&raw);
        let parents = brief_parents(ctx);
        emit_filing(ctx, ticker, &raw, &header, None, parents)?;
    }
    Ok(())
}

fn emit_filing(
    ctx: &mut TaskContext<'_>,
    ticker: &str,
    raw: &str,
    header: &BTreeMap<String, String>,
    source_url: Option<String>,
    raw_parents: Vec<ArtifactId>,
) -> Result<ArtifactId, RunnerError> {
    let raw_id = ctx.emit(
        ArtifactDraft::text("filings", raw)
            .parents(raw_parents)
            .ticker(Some(ticker.to_string())),
    )?;
    let text = plain_text(raw);
    let sections: BTreeMap<String, String> = parse_sections(&text)
        .into_iter()
        .map(|(n, s, e)| (n, text[s..e].to_string()))
        .collect();
    let field = |k: &str| header.get(k).cloned().unwrap_or_default();
    let doc = FilingDocument {
        ticker: ticker.to_string(),
        company: field("company"),
        form_type: field("form"),
        accession: field("accession"),
        filed: field("filed"),
        period: field("period"),
        source_url,
        raw_artifact: raw_id.clone(),
        sections,
    };
    if doc.sections.is_empty() {
        ctx.warn(format!(
            "filing {} has no recognizable sections",
            doc.accession
        ));
    }
    ctx.emit(
        ArtifactDraft::structured("filings", &doc)
            .map_err(to_draft_err)?
            .parents([raw_id]),
    )
}

fn run_live(ctx: &mut TaskContext<'_>, ticker: &str) -> Result<(), RunnerError> {
    let form = ctx.param_str("form_type").unwrap_or("10-K").to_string();
    let cached = ctx
        .store
        .query(
            &ArtifactFilter::category("filings")
                .with_ticker(ticker)
                .with_producer(&ctx.skill.id),
        )
        .into_iter()
        .filter(|a| a.payload_kind == PayloadKind::Structured)
        .find_map(|a| {
            let doc: FilingDocument = a.json().ok()?;
            (doc.source_url.is_some() && doc.form_type == form).then_some((a, doc))
        });
    if let Some((artifact, doc)) = cached {
        let raw = ctx.store.get(&doc.raw_artifact).ok_or_else(|| {
            RunnerError::skill("runner-error", "cached filing lost its raw artifact")
        })?;
        let mut header = BTreeMap::new();
        header.insert("company".to_string(), doc.company.clone());
        header.insert("form".to_string(), doc.form_type.clone());
        header.insert("accession".to_string(), doc.accession.clone());
        header.insert("filed".to_string(), doc.filed.clone());
        header.insert("period".to_string(), doc.period.clone());
        let mut parents = brief_parents(ctx);
        parents.push(raw.id.clone());
        parents.push(artifact.id.clone());
        emit_filing(
            ctx,
            ticker,
            &raw.payload,
            &header,
            doc.source_url.clone(),
            parents,
        )?;
        return Ok(());
    }

    let client = ctx.env.edgar.clone().ok_or_else(|| {
        RunnerError::skill("network-failure", "live mode requires an EDGAR client")
    })?;
    let filing = client
        .latest_filing(ticker, &form)
        .map_err(|e| RunnerError::skill(e.kind(), e.to_string()))?;
    let mut header = BTreeMap::new();
    header.insert("company".to_string(), filing.company.clone());
    header.insert("form".to_string(), filing.form_type.clone());
    header.insert("accession".to_string(), filing.accession.clone());
    header.insert("filed".to_string(), filing.filed.clone());
    header.insert("period".to_string(), filing.period.clone());
    let parents = brief_parents(ctx);
    emit_filing(
        ctx,
        ticker,
        &filing.body,
        &header,
        Some(filing.url.clone()),
        parents,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = "FORM: 10-K\nACCESSION: 1\n---\nTable of contents\nItem 1. Business\nItem 1A. Risk Factors\n\
Item 7. Management's Discussion\n\nItem 1. Business\n\nWe make chips.\nMore chips.\n\n\
Item 1A. Risk Factors\nDemand may fall.\nItem 2. Properties\nOffices.\n\
Item 7. Management’s Discussion and Analysis\nRevenue grew.\n";

    #[test]
    fn sections_skip_the_table_of_contents() {
        let (header, body) = split_header(DOC);
        assert_eq!(header["form"], "10-K");
        let spans = parse_sections(body);
        let get = |n: &str| {
            let (_, s, e) = spans.iter().find(|(name, _, _)| name == n).unwrap();
            &body[*s..*e]
        };
        assert_eq!(get("business_overview"), "We make chips.\nMore chips.");
        assert_eq!(get("risk_factors"), "Demand may fall.");
        assert_eq!(get("mdna"), "Revenue grew.");
    }

    #[test]
    fn html_is_flattened() {
        let t = plain_text(
            "<html><body><p>Item 1. Business</p><div>We&nbsp;sell &amp; ship.</div></body></html>",
        );
        assert_eq!(t, "Item 1. Business\nWe sell & ship.");
    }
}
