//! Seeds a store with hand-written memos and their graph facts, so graph
//! queries can be exercised without running engagements.
//!
//! Memo files are loaded in file-name order. `[[memo:<label>]]` in a memo
//! body is replaced by the citation marker of the earlier memo whose file stem
//! is `<label>`.

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use thiserror::Error;

use crate::skills::kg_update::facts_from_memo;
use crate::skills::memo::MemoDocument;
use crate::store::{ArtifactDraft, ArtifactId, EvidenceStore, StoreError};

pub const FIXTURE_ENGAGEMENT: &str = "fixture-graph";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{file}: `[[memo:{label}]]` does not name an earlier memo")]
    UnknownLabel { file: String, label: String },
    #[error("{file}: {message}")]
    Malformed { file: String, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Returns label → memo artifact id.
pub fn seed_memo_fixture(
    store: &EvidenceStore,
    dir: &Path,
) -> Result<BTreeMap<String, ArtifactId>, FixtureError> {
    let io = |e: std::io::Error| FixtureError::Io {
        path: dir.display().to_string(),
        source: e,
    };
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|x| x.to_str()) == Some("md"))
        .collect();
    files.sort();
    let placeholder = Regex::new(r"\[\[memo:([A-Za-z0-9_-]+)\]\]").unwrap();
    let mut ids: BTreeMap<String, ArtifactId> = BTreeMap::new();
    for path in files {
        let file = path.display().to_string();
        let label = path
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let raw = std::fs::read_to_string(&path).map_err(|e| FixtureError::Io {
            path: file.clone(),
            source: e,
        })?;
        let mut missing = None;
        let text = placeholder.replace_all(&raw, |c: &regex::Captures<'_>| match ids.get(&c[1]) {
            Some(id) => format!("[[artifact:{id}]]"),
            None => {
                missing.get_or_insert_with(|| c[1].to_string());
                String::new()
            }
        });
        if let Some(l) = missing {
            return Err(FixtureError::UnknownLabel { file, label: l });
        }
        let doc = MemoDocument::parse(&text).map_err(|e| FixtureError::Malformed {
            file: file.clone(),
            message: e.to_string(),
        })?;
        let cited: Vec<ArtifactId> = doc.inline_citations();
        let memo_id = store.append(
            ArtifactDraft::text("memo", text.as_ref())
                .produced_by(
                    FIXTURE_ENGAGEMENT,
                    "assemble_memo",
                    &format!("memo-{label}"),
                )
                .ticker(Some(doc.ticker.clone()))
                .parents(cited),
        )?;
        let memo = store.get(&memo_id).expect("just appended");
        let facts =
            facts_from_memo(&memo_id, &memo.payload, memo.created_at, store).map_err(|e| {
                FixtureError::Malformed {
                    file: file.clone(),
                    message: e.to_string(),
                }
            })?;
        store.append(
            ArtifactDraft::structured("graph_facts", &facts)
                .map_err(|e| FixtureError::Malformed {
                    file: file.clone(),
                    message: e.to_string(),
                })?
                .produced_by(FIXTURE_ENGAGEMENT, "kg_update", &format!("kg-{label}"))
                .ticker(Some(doc.ticker.clone()))
                .parents([memo_id.clone()]),
        )?;
        ids.insert(label, memo_id);
    }
    Ok(ids)
}
