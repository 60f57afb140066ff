//! `extract_KPIs`: pulls headline metrics out of filing prose and the market
//! snapshot. Every metric must cite the artifact its text came from.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::filings::{plain_text, FilingDocument};
use super::{parse_amount, to_draft_err};
use crate::runners::{
    render_artifact, FieldSpec, HybridSkill, OutputSchema, RunnerError, TaskContext, VerifierReport,
};
use crate::store::{Artifact, ArtifactDraft, ArtifactId, PayloadKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub unit: String,
    pub source: ArtifactId,
    /// The cited text the value was parsed from.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSet {
    pub ticker: String,
    pub period: String,
    pub metrics: BTreeMap<String, Metric>,
}

#[derive(Clone, Copy, PartialEq)]
enum Unit {
    Usd,
    UsdPerShare,
    Shares,
    /// Bounded to [0, 1].
    Ratio,
    /// Year-over-year change; at least -1.
    Growth,
}

impl Unit {
    fn as_str(self) -> &'static str {
        match self {
            Unit::Usd => "USD",
            Unit::UsdPerShare => "USD/share",
            Unit::Shares => "shares",
            Unit::Ratio => "ratio",
            Unit::Growth => "growth",
        }
    }
}

const AMOUNT: &str = r"([0-9][0-9.,]*\s+(?:thousand|million|billion|trillion))";
const NUMBER: &str = r"([0-9][0-9.eE+]*)";

/// (name, unit, from filings, capture regex).
fn metric_table() -> Vec<(&'static str, Unit, bool, String)> {
    vec![
        ("revenue_fy", Unit::Usd, true, format!(r"(?i)revenue for fiscal (?:year )?\d{{4}} was \${AMOUNT}")),
        (
            "revenue_yoy",
            Unit::Growth,
            true,
            r"(?i)revenue for fiscal (?:year )?\d{4} was \$[0-9.,]+\s+\w+, up ([0-9.]+%)".to_string(),
        ),
        (
            "revenue_q4_datacenter",
            Unit::Usd,
            true,
            format!(r"(?i)data center revenue for the fourth quarter was \${AMOUNT}"),
        ),
        (
            "datacenter_share",
            Unit::Ratio,
            true,
            r"(?i)data center revenue for the fourth quarter was [^,]*, or ([0-9.]+%) of total revenue".to_string(),
        ),
        (
            "gross_margin_q4",
            Unit::Ratio,
            true,
            r"(?i)gross margin for the fourth quarter was ([0-9.]+%)".to_string(),
        ),
        (
            "free_cash_flow_fy",
            Unit::Usd,
            true,
            format!(r"(?i)free cash flow for fiscal (?:year )?\d{{4}} was \${AMOUNT}"),
        ),
        ("price", Unit::UsdPerShare, false, format!(r#""price":\s*{NUMBER}"#)),
        ("market_cap", Unit::Usd, false, format!(r#""market_cap":\s*{NUMBER}"#)),
        ("shares_outstanding", Unit::Shares, false, format!(r#""shares_outstanding":\s*{NUMBER}"#)),
    ]
}

pub(super) struct ExtractKpis;

/// Raw filing text artifacts (the structured documents are skipped).
fn raw_filings(ctx: &TaskContext<'_>) -> Vec<Arc<Artifact>> {
    ctx.inputs("filings")
        .iter()
        .filter(|a| a.payload_kind == PayloadKind::Text)
        .cloned()
        .collect()
}

fn period(ctx: &TaskContext<'_>) -> String {
    ctx.inputs("filings")
        .iter()
        .filter_map(|a| a.json::<FilingDocument>().ok())
        .map(|d| {
            if d.period.is_empty() {
                d.filed
            } else {
                d.period
            }
        })
        .next()
        .unwrap_or_default()
}

fn rendered_text(a: &Artifact) -> String {
    match a.payload_kind {
        PayloadKind::Text => plain_text(&a.payload),
        _ => a.payload.clone(),
    }
}

impl HybridSkill for ExtractKpis {
    fn schema(&self, _ctx: &TaskContext<'_>) -> OutputSchema {
        let fields = metric_table()
            .into_iter()
            .map(|(name, unit, _, re)| {
                FieldSpec::cited(name)
                    .optional()
                    .extract(&re)
                    .describe(&format!(
                        "verbatim amount with its scale word ({})",
                        unit.as_str()
                    ))
            })
            .collect();
        OutputSchema::new("kpis", fields)
    }

    fn prompt(&self, ctx: &TaskContext<'_>) -> Result<String, RunnerError> {
        let filings = raw_filings(ctx);
        if filings.is_empty() {
            return Err(RunnerError::skill(
                "empty-input",
                "extract_kpis needs at least one filing",
            ));
        }
        let mut p = String::from("## Evidence\n");
        for a in filings.iter().chain(ctx.inputs("market_snapshot")) {
            let mut shown = (**a).clone();
            shown.payload = rendered_text(a);
            p.push_str(&render_artifact(&shown));
        }
        Ok(p)
    }

    fn verify(&self, ctx: &TaskContext<'_>, output: &Map<String, Value>) -> VerifierReport {
        let mut report = VerifierReport::pass();
        let mut from_filings = 0;
        for (name, unit, _, _) in metric_table() {
            let Some(field) = output.get(name) else {
                continue;
            };
            let text = field
                .get("value")
                .and_then(Value::as_str)
                .unwrap_or_default();
            let source = ArtifactId::new(
                field
                    .get("source")
                    .and_then(Value::as_str)
                    .unwrap_or_default(),
            );
            let cited = ["filings", "market_snapshot"]
                .iter()
                .flat_map(|c| ctx.inputs(c).iter())
                .find(|a| a.id == source);
            let Some(cited) = cited else {
                report.push(
                    name,
                    "citation",
                    format!("source {source} is not a filings or market_snapshot input"),
                );
                continue;
            };
            if !rendered_text(cited).contains(text) {
                report.push(
                    name,
                    "grounding",
                    format!("`{text}` does not occur in {source}"),
                );
            }
            let Some(value) = parse_amount(text) else {
                report.push(
                    name,
                    "amount",
                    format!("`{text}` is not a parseable amount"),
                );
                continue;
            };
            match unit {
                Unit::Ratio if !(0.0..=1.0).contains(&value) => {
                    report.push(name, "range", format!("ratio {value} outside [0, 1]"))
                }
                Unit::Growth if value < -1.0 => {
                    report.push(name, "range", format!("growth {value} below -100%"))
                }
                Unit::Usd | Unit::UsdPerShare | Unit::Shares if value < 0.0 => {
                    report.push(name, "range", format!("negative amount {value}"))
                }
                _ => {}
            }
            if cited.category.as_str() == "filings" {
                from_filings += 1;
            }
        }
        if from_filings == 0 {
            report.push("", "empty", "no extractable metrics in the filings");
        }
        report
    }

    fn accept(
        &self,
        ctx: &mut TaskContext<'_>,
        output: Map<String, Value>,
    ) -> Result<(), RunnerError> {
        let ticker = ctx.require_ticker()?.to_uppercase();
        let mut metrics = BTreeMap::new();
        let mut sources = BTreeSet::new();
        for (name, unit, _, _) in metric_table() {
            let Some(field) = output.get(name) else {
                continue;
            };
            let text = field["value"].as_str().unwrap_or_default().to_string();
            let source = ArtifactId::new(field["source"].as_str().unwrap_or_default());
            let value = parse_amount(&text).unwrap_or_default();
            sources.insert(source.clone());
            metrics.insert(
                name.to_string(),
                Metric {
                    value,
                    unit: unit.as_str().into(),
                    source,
                    text,
                },
            );
        }
        let set = KpiSet {
            ticker,
            period: period(ctx),
            metrics,
        };
        ctx.emit(
            ArtifactDraft::structured("kpis", &set)
                .map_err(to_draft_err)?
                .parents(sources),
        )?;
        Ok(())
    }
}
