//! `parse_segments`: per-filing section offsets plus the reportable segments
//! the business overview names.
//!
//! Offsets index the raw artifact payload for text filings. HTML filings are
//! flattened first, and their offsets index that flattened text instead
//! (`offset_basis = "plain_text"`).

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::filings::{parse_sections, plain_text, FilingDocument, SECTION_NAMES};
use super::to_draft_err;
use crate::runners::{
    render_artifact, FieldSpec, HybridSkill, OutputSchema, RunnerError, TaskContext, VerifierReport,
};
use crate::store::{ArtifactDraft, ArtifactId, PayloadKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionSpan {
    pub start: usize,
    pub end: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilingSegments {
    /// The structured filing document, when one was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filing: Option<ArtifactId>,
    pub raw: ArtifactId,
    pub accession: String,
    pub form_type: String,
    pub offset_basis: String,
    pub sections: BTreeMap<String, SectionSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    pub ticker: String,
    pub filings: Vec<FilingSegments>,
    pub reportable_segments: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments_source: Option<ArtifactId>,
    pub summary: String,
}

const SEGMENTS_RE: &str = r"(?i)\b(?:two|three|four|five) (?:reportable |operating )?segments(?: in which we report)?:\s*([^.\n]+)";

pub(super) struct ParseSegments;

/// Computes spans for every raw filing input; paired with its structured doc.
fn spans(ctx: &TaskContext<'_>) -> Vec<(FilingSegments, Option<FilingDocument>, String)> {
    let docs: Vec<(ArtifactId, FilingDocument)> = ctx
        .inputs("filings")
        .iter()
        .filter_map(|a| a.json::<FilingDocument>().ok().map(|d| (a.id.clone(), d)))
        .collect();
    ctx.inputs("filings")
        .iter()
        .filter(|a| a.payload_kind == PayloadKind::Text)
        .map(|raw| {
            let text = plain_text(&raw.payload);
            let basis = if text == raw.payload {
                "raw"
            } else {
                "plain_text"
            };
            let doc = docs.iter().find(|(_, d)| d.raw_artifact == raw.id);
            let sections = parse_sections(&text)
                .into_iter()
                .map(|(n, s, e)| {
                    (
                        n,
                        SectionSpan {
                            start: s,
                            end: e,
                            length: e - s,
                        },
                    )
                })
                .collect();
            let fs = FilingSegments {
                filing: doc.map(|(id, _)| id.clone()),
                raw: raw.id.clone(),
                accession: doc.map(|(_, d)| d.accession.clone()).unwrap_or_default(),
                form_type: doc.map(|(_, d)| d.form_type.clone()).unwrap_or_default(),
                offset_basis: basis.into(),
                sections,
            };
            (fs, doc.map(|(_, d)| d.clone()), text)
        })
        .collect()
}

fn split_segments(list: &str) -> Vec<String> {
    let re = Regex::new(r",\s*(?:and\s+)?|\s+and\s+").unwrap();
    re.split(list.trim())
        .map(|s| s.trim().trim_end_matches('.').to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl HybridSkill for ParseSegments {
    fn schema(&self, _ctx: &TaskContext<'_>) -> OutputSchema {
        OutputSchema::new(
            "segments",
            vec![
                FieldSpec::cited("reportable_segments")
                    .optional()
                    .extract(SEGMENTS_RE)
                    .describe("the list of reportable segments exactly as the filing words it"),
                FieldSpec::text("summary")
                    .describe("one line describing which sections were located"),
            ],
        )
    }

    fn prompt(&self, ctx: &TaskContext<'_>) -> Result<String, RunnerError> {
        let found = spans(ctx);
        if found.is_empty() {
            return Err(RunnerError::skill(
                "empty-input",
                "parse_segments needs at least one filing",
            ));
        }
        let mut p = String::from("## summary\n");
        for (fs, _, _) in &found {
            let names: Vec<&str> = fs.sections.keys().map(String::as_str).collect();
            p.push_str(&format!(
                "{} {}: {} of {} sections located ({})\n",
                fs.form_type,
                fs.accession,
                names.len(),
                SECTION_NAMES.len(),
                names.join(", ")
            ));
        }
        p.push_str("\n## Evidence\n");
        for (fs, _, text) in &found {
            if let Some(raw) = ctx.store.get(&fs.raw) {
                let mut shown = (*raw).clone();
                shown.payload = text.clone();
                p.push_str(&render_artifact(&shown));
            }
        }
        Ok(p)
    }

    fn verify(&self, ctx: &TaskContext<'_>, output: &Map<String, Value>) -> VerifierReport {
        let mut report = VerifierReport::pass();
        for (i, (fs, doc, text)) in spans(ctx).iter().enumerate() {
            for name in SECTION_NAMES {
                match fs.sections.get(name) {
                    None => report.push(
                        &format!("filings[{i}].sections.{name}"),
                        "missing-section",
                        format!("filing {} has no {name} section", fs.accession),
                    ),
                    Some(span) => {
                        let slice = &text[span.start..span.end];
                        if let Some(expected) = doc.as_ref().and_then(|d| d.sections.get(name)) {
                            if slice != expected {
                                report.push(
                                    &format!("filings[{i}].sections.{name}"),
                                    "offset-round-trip",
                                    "slice differs from the parsed section text",
                                );
                            }
                        }
                    }
                }
            }
        }
        if let Some(seg) = output.get("reportable_segments") {
            let source = seg
                .get("source")
                .and_then(Value::as_str)
                .unwrap_or_default();
            let ok = ctx
                .inputs("filings")
                .iter()
                .any(|a| a.id.as_str() == source);
            if !ok {
                report.push(
                    "reportable_segments",
                    "citation",
                    format!("{source} is not a filings input"),
                );
            }
        }
        report
    }

    fn accept(
        &self,
        ctx: &mut TaskContext<'_>,
        output: Map<String, Value>,
    ) -> Result<(), RunnerError> {
        let filings: Vec<FilingSegments> = spans(ctx).into_iter().map(|(fs, _, _)| fs).collect();
        let (segments, source) = match output.get("reportable_segments") {
            Some(v) => (
                split_segments(v["value"].as_str().unwrap_or_default()),
                v["source"].as_str().map(ArtifactId::new),
            ),
            None => (Vec::new(), None),
        };
        let set = SegmentSet {
            ticker: ctx.require_ticker()?.to_uppercase(),
            filings,
            reportable_segments: segments,
            segments_source: source,
            summary: output
                .get("summary")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string(),
        };
        let parents: Vec<ArtifactId> = ctx.inputs("filings").iter().map(|a| a.id.clone()).collect();
        ctx.emit(
            ArtifactDraft::structured("segments", &set)
                .map_err(to_draft_err)?
                .parents(parents),
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_lists_split_on_commas_and_and() {
        assert_eq!(
            split_segments("Compute & Networking and Graphics"),
            vec!["Compute & Networking", "Graphics"]
        );
        assert_eq!(split_segments("A, B, and C"), vec!["A", "B", "C"]);
    }
}
