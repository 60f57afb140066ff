use serde::{Deserialize, Serialize};

use super::{read_json, to_draft_err, SourceMode};
use crate::runners::{RunnerError, TaskContext};
use crate::store::ArtifactDraft;

/// The setup-phase scope of an engagement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageBrief {
    pub ticker: String,
    pub company: String,
    pub objective: String,
    #[serde(default)]
    pub persona_id: String,
    #[serde(default)]
    pub workflow_id: String,
    pub source_mode: SourceMode,
}

pub(super) fn run(ctx: &mut TaskContext<'_>) -> Result<(), RunnerError> {
    let ticker = ctx.require_ticker()?.to_uppercase();
    let mode = SourceMode::from_param(ctx.param_str("source_mode"));
    let mut company = ticker.clone();
    if mode == SourceMode::Fixture {
        let dir = ctx.env.ticker_dir(&ticker);
        if !dir.is_dir() {
            return Err(RunnerError::skill(
                "unknown-ticker",
                format!(
                    "no fixture directory for {ticker} under {}",
                    ctx.env.fixtures_dir.display()
                ),
            ));
        }
        let market = dir.join("market.json");
        if market.is_file() {
            let v: serde_json::Value = read_json(&market)?;
            if let Some(c) = v.get("company").and_then(|c| c.as_str()) {
                company = c.to_string();
            }
        }
    }
    let brief = CoverageBrief {
        objective: ctx
            .param_str("objective")
            .map(String::from)
            .unwrap_or_else(|| format!("research {ticker}")),
        persona_id: ctx.param_str("persona_id").unwrap_or_default().to_string(),
        workflow_id: ctx.param_str("workflow_id").unwrap_or_default().to_string(),
        ticker,
        company,
        source_mode: mode,
    };
    ctx.emit(ArtifactDraft::structured("coverage_brief", &brief).map_err(to_draft_err)?)?;
    Ok(())
}
