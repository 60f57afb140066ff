use serde::{Deserialize, Serialize};

use super::{read_json, to_draft_err};
use crate::runners::{RunnerError, TaskContext};
use crate::store::ArtifactDraft;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSnapshot {
    pub ticker: String,
    #[serde(default)]
    pub company: String,
    /// USD per share.
    pub price: f64,
    /// USD.
    pub market_cap: f64,
    #[serde(default)]
    pub shares_outstanding: Option<f64>,
    #[serde(default = "usd")]
    pub currency: String,
    pub as_of: String,
}

fn usd() -> String {
    "USD".into()
}

/// Market data always comes from fixtures; there is no vendor client.
pub(super) fn run(ctx: &mut TaskContext<'_>) -> Result<(), RunnerError> {
    let ticker = ctx.require_ticker()?.to_uppercase();
    let dir = ctx.env.ticker_dir(&ticker);
    if !dir.is_dir() {
        return Err(RunnerError::skill(
            "unknown-ticker",
            format!("no fixtures for {ticker}"),
        ));
    }
    let path = dir.join("market.json");
    if !path.is_file() {
        return Err(RunnerError::skill(
            "empty-fixture",
            format!("{} is missing", path.display()),
        ));
    }
    let snap: MarketSnapshot = read_json(&path)?;
    if !snap.ticker.eq_ignore_ascii_case(&ticker) {
        return Err(RunnerError::skill(
            "runner-error",
            format!("{} describes {}, not {ticker}", path.display(), snap.ticker),
        ));
    }
    let parents: Vec<_> = ctx
        .inputs("coverage_brief")
        .iter()
        .map(|a| a.id.clone())
        .collect();
    ctx.emit(
        ArtifactDraft::structured("market_snapshot", &snap)
            .map_err(to_draft_err)?
            .parents(parents),
    )?;
    Ok(())
}
