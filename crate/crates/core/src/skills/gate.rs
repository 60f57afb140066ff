//! `gate_check`: the source-quality gate between Analyze and Compose.
//!
//! The rubric is evaluated in code so the decision is a pure function of the
//! input artifacts; the provider only words the summary line.
//!
//! Required: `filings` (a parsed document with sections), `market_snapshot`
//! (positive price), `kpis` (at least one metric), `segments` (every located
//! filing). Optional `news` and `transcripts` only add warnings.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::filings::FilingDocument;
use super::{to_draft_err, KpiSet, MarketSnapshot, SegmentSet};
use crate::runners::{
    FieldSpec, HybridSkill, OutputSchema, RunnerError, TaskContext, VerifierReport,
};
use crate::store::ArtifactDraft;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateMiss {
    pub category: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub passed: bool,
    pub missing: Vec<GateMiss>,
    pub summary: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

pub(super) struct GateCheck;

/// Evaluates the rubric. `passed` is derived from `missing`, never set separately.
pub fn evaluate(ctx: &TaskContext<'_>) -> (Vec<GateMiss>, Vec<String>) {
    let mut missing = Vec::new();
    let mut miss = |category: &str, reason: String| {
        missing.push(GateMiss {
            category: category.into(),
            reason,
        })
    };

    let filings = ctx.inputs("filings");
    let docs: Vec<FilingDocument> = filings.iter().filter_map(|a| a.json().ok()).collect();
    if filings.is_empty() {
        miss("filings", "no artifact".into());
    } else if !docs.iter().any(|d| !d.sections.is_empty()) {
        miss("filings", "no parsed filing with sections".into());
    }

    let market = ctx.inputs("market_snapshot");
    if market.is_empty() {
        miss("market_snapshot", "no artifact".into());
    } else if !market
        .iter()
        .filter_map(|a| a.json::<MarketSnapshot>().ok())
        .any(|m| m.price > 0.0 && m.market_cap > 0.0)
    {
        miss(
            "market_snapshot",
            "no snapshot with a positive price and market cap".into(),
        );
    }

    let kpis = ctx.inputs("kpis");
    if kpis.is_empty() {
        miss("kpis", "no artifact".into());
    } else if !kpis
        .iter()
        .filter_map(|a| a.json::<KpiSet>().ok())
        .any(|k| !k.metrics.is_empty())
    {
        miss("kpis", "no metrics extracted".into());
    }

    let segments = ctx.inputs("segments");
    if segments.is_empty() {
        miss("segments", "no artifact".into());
    } else if !segments
        .iter()
        .filter_map(|a| a.json::<SegmentSet>().ok())
        .any(|s| !s.filings.is_empty() && s.filings.iter().all(|f| !f.sections.is_empty()))
    {
        miss("segments", "no located filing sections".into());
    }

    let mut warnings = Vec::new();
    for optional in ["news", "transcripts"] {
        if ctx.inputs(optional).is_empty() {
            warnings.push(format!("{optional}: none available; proceeding without"));
        }
    }
    (missing, warnings)
}

fn describe(missing: &[GateMiss], warnings: &[String]) -> String {
    if missing.is_empty() {
        format!("Sources sufficient; {} optional gap(s).", warnings.len())
    } else {
        let list: Vec<String> = missing
            .iter()
            .map(|m| format!("{} ({})", m.category, m.reason))
            .collect();
        format!("Sources insufficient: {}.", list.join("; "))
    }
}

impl HybridSkill for GateCheck {
    fn schema(&self, _ctx: &TaskContext<'_>) -> OutputSchema {
        OutputSchema::new(
            "gate_report",
            vec![FieldSpec::text("summary")
                .describe("one sentence stating whether sourcing is sufficient")],
        )
    }

    fn prompt(&self, ctx: &TaskContext<'_>) -> Result<String, RunnerError> {
        let (missing, warnings) = evaluate(ctx);
        let mut p = format!(
            "## summary\n{}\n\n## Rubric findings\n",
            describe(&missing, &warnings)
        );
        for m in &missing {
            p.push_str(&format!("- MISSING {}: {}\n", m.category, m.reason));
        }
        for w in &warnings {
            p.push_str(&format!("- WARNING {w}\n"));
        }
        Ok(p)
    }

    fn verify(&self, _ctx: &TaskContext<'_>, output: &Map<String, Value>) -> VerifierReport {
        let mut report = VerifierReport::pass();
        if output
            .get("summary")
            .and_then(Value::as_str)
            .is_none_or(|s| s.trim().is_empty())
        {
            report.push("summary", "required", "summary must not be blank");
        }
        report
    }

    fn accept(
        &self,
        ctx: &mut TaskContext<'_>,
        output: Map<String, Value>,
    ) -> Result<(), RunnerError> {
        let (missing, warnings) = evaluate(ctx);
        let decision = GateDecision {
            passed: missing.is_empty(),
            summary: output["summary"].as_str().unwrap_or_default().to_string(),
            missing,
            warnings,
        };
        for w in &decision.warnings {
            ctx.warn(w.clone());
        }
        let report_id =
            ctx.emit(ArtifactDraft::structured("gate_report", &decision).map_err(to_draft_err)?)?;
        if !decision.passed && ctx.skill.produces_category("brief_assessment") {
            let mut text = format!(
                "# Brief assessment: {}\n\nThe engagement stopped before composition.\n\n",
                ctx.ticker.unwrap_or("unknown")
            );
            for m in &decision.missing {
                text.push_str(&format!("- {}: {}\n", m.category, m.reason));
            }
            text.push_str(&format!("\n{}\n", decision.summary));
            ctx.emit(ArtifactDraft::text("brief_assessment", text).parents([report_id]))?;
        }
        Ok(())
    }
}
