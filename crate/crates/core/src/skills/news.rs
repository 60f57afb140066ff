use serde::{Deserialize, Serialize};

use super::{read_json, sorted_files, to_draft_err};
use crate::runners::{RunnerError, TaskContext};
use crate::store::ArtifactDraft;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub headline: String,
    pub source: String,
    pub date: String,
    pub body: String,
}

/// One `news` artifact per fixture file. News is optional, so an absent
/// directory is a warning rather than an error.
pub(super) fn run(ctx: &mut TaskContext<'_>) -> Result<(), RunnerError> {
    let ticker = ctx.require_ticker()?.to_uppercase();
    let dir = ctx.env.ticker_dir(&ticker);
    if !dir.is_dir() {
        return Err(RunnerError::skill(
            "unknown-ticker",
            format!("no fixtures for {ticker}"),
        ));
    }
    let files = sorted_files(&dir.join("news"), "json");
    if files.is_empty() {
        ctx.warn(format!("no news fixtures for {ticker}"));
        return Ok(());
    }
    let parents: Vec<_> = ctx
        .inputs("coverage_brief")
        .iter()
        .map(|a| a.id.clone())
        .collect();
    for f in files {
        let item: NewsItem = read_json(&f)?;
        ctx.emit(
            ArtifactDraft::structured("news", &item)
                .map_err(to_draft_err)?
                .parents(parents.clone())
                .ticker(Some(ticker.clone())),
        )?;
    }
    Ok(())
}
