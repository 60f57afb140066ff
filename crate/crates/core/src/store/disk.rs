use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    check_artifact, Artifact, ArtifactId, Finding, IntegrityReport, PayloadKind, StoreError,
};
use crate::category::CategoryId;

/// Payloads up to this many bytes live inline in the index record.
pub const INLINE_LIMIT: usize = 512;

const INDEX_FILE: &str = "index.ndjson";
const OBJECTS_DIR: &str = "objects";

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PayloadRef {
    Inline(String),
    Object(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexRecord {
    id: ArtifactId,
    category: CategoryId,
    engagement_id: String,
    producer_skill: String,
    producer_task: String,
    parent_ids: Vec<ArtifactId>,
    created_at: DateTime<Utc>,
    payload: PayloadRef,
    payload_kind: PayloadKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ticker: Option<String>,
}

fn object_rel_path(id: &ArtifactId) -> String {
    format!("{OBJECTS_DIR}/{}/{}", &id.as_str()[..2], id.as_str())
}

pub(super) struct DiskWriter {
    root: PathBuf,
    index: File,
}

impl DiskWriter {
    pub(super) fn write(&mut self, a: &Artifact) -> Result<(), StoreError> {
        let payload = if a.payload.len() > INLINE_LIMIT {
            let rel = object_rel_path(&a.id);
            let path = self.root.join(&rel);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            fs::write(&path, a.payload.as_bytes())?;
            PayloadRef::Object(rel)
        } else {
            PayloadRef::Inline(a.payload.clone())
        };
        let record = IndexRecord {
            id: a.id.clone(),
            category: a.category.clone(),
            engagement_id: a.engagement_id.clone(),
            producer_skill: a.producer_skill.clone(),
            producer_task: a.producer_task.clone(),
            parent_ids: a.parent_ids.clone(),
            created_at: a.created_at,
            payload,
            payload_kind: a.payload_kind,
            ticker: a.ticker.clone(),
        };
        let mut line =
            serde_json::to_string(&record).map_err(|e| StoreError::Malformed(e.to_string()))?;
        line.push('\n');
        self.index.write_all(line.as_bytes())?;
        self.index.flush()?;
        Ok(())
    }
}

fn load_payload(root: &Path, payload: &PayloadRef) -> std::io::Result<String> {
    match payload {
        PayloadRef::Inline(s) => Ok(s.clone()),
        PayloadRef::Object(rel) => {
            let bytes = fs::read(root.join(rel))?;
            Ok(String::from_utf8_lossy(&bytes).into_owned())
        }
    }
}

fn into_artifact(record: IndexRecord, payload: String) -> Artifact {
    Artifact {
        id: record.id,
        category: record.category,
        engagement_id: record.engagement_id,
        producer_skill: record.producer_skill,
        producer_task: record.producer_task,
        parent_ids: record.parent_ids,
        created_at: record.created_at,
        payload,
        payload_kind: record.payload_kind,
        ticker: record.ticker,
    }
}

pub(super) fn open(root: &Path) -> Result<(Vec<Artifact>, DiskWriter), StoreError> {
    fs::create_dir_all(root.join(OBJECTS_DIR))?;
    let index_path = root.join(INDEX_FILE);
    let mut artifacts = Vec::new();
    if index_path.exists() {
        let reader = BufReader::new(File::open(&index_path)?);
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: IndexRecord = serde_json::from_str(&line)
                .map_err(|e| StoreError::Malformed(format!("line {}: {e}", n + 1)))?;
            let payload = load_payload(root, &record.payload)?;
            artifacts.push(into_artifact(record, payload));
        }
    }
    let index = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&index_path)?;
    Ok((
        artifacts,
        DiskWriter {
            root: root.to_path_buf(),
            index,
        },
    ))
}

/// Scans a store directory without opening it for writing.
pub fn verify_dir(root: &Path) -> IntegrityReport {
    let mut report = IntegrityReport::default();
    let index_path = root.join(INDEX_FILE);
    let Ok(file) = File::open(&index_path) else {
        return report;
    };
    let mut seen = BTreeSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                report.findings.push(Finding::MalformedRecord {
                    line: n + 1,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        report.checked += 1;
        let record: IndexRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                report.findings.push(Finding::MalformedRecord {
                    line: n + 1,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let payload = match load_payload(root, &record.payload) {
            Ok(p) => p,
            Err(_) => {
                let path = match &record.payload {
                    PayloadRef::Object(rel) => rel.clone(),
                    PayloadRef::Inline(_) => INDEX_FILE.to_string(),
                };
                report.findings.push(Finding::MissingPayload {
                    id: record.id.clone(),
                    path,
                });
                seen.insert(record.id);
                continue;
            }
        };
        let artifact = into_artifact(record, payload);
        check_artifact(&artifact, &seen, &mut report);
        seen.insert(artifact.id);
    }
    report
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::super::{ArtifactDraft, EvidenceStore};
    use super::*;
    use crate::clock::Clock;

    fn big(n: usize) -> String {
        "NVIDIA 10-K excerpt. ".repeat(n)
    }

    #[test]
    fn reopen_replays_index() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(Clock::logical());
        let (a, b) = {
            let s = EvidenceStore::open(dir.path(), clock.clone()).unwrap();
            let a = s.append(ArtifactDraft::text("filings", big(100))).unwrap();
            let b = s
                .append(ArtifactDraft::text("segments", "small").parents([a.clone()]))
                .unwrap();
            (a, b)
        };
        let s = EvidenceStore::open(dir.path(), clock).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(&a).unwrap().payload, big(100));
        assert!(dir.path().join(object_rel_path(&a)).exists());
        assert!(!dir.path().join(object_rel_path(&b)).exists());
        assert!(s.verify_integrity().is_ok());
    }

    #[test]
    fn byte_flip_in_object_is_reported_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let s = EvidenceStore::open(dir.path(), Arc::new(Clock::logical())).unwrap();
        let a = s.append(ArtifactDraft::text("filings", big(60))).unwrap();
        assert!(s.verify_integrity().is_ok());
        let path = dir.path().join(object_rel_path(&a));
        let mut bytes = fs::read(&path).unwrap();
        bytes[10] ^= 0x01;
        fs::write(&path, bytes).unwrap();
        let report = s.verify_integrity();
        assert_eq!(report.findings.len(), 1);
        assert!(matches!(&report.findings[0], Finding::Corrupt { id, .. } if *id == a));
    }

    #[test]
    fn truncated_index_reports_dangling_parents() {
        let dir = tempfile::tempdir().unwrap();
        let s = EvidenceStore::open(dir.path(), Arc::new(Clock::logical())).unwrap();
        let a = s.append(ArtifactDraft::text("filings", "raw")).unwrap();
        let b = s
            .append(ArtifactDraft::text("segments", "s").parents([a.clone()]))
            .unwrap();
        drop(s);
        let index = dir.path().join(INDEX_FILE);
        let text = fs::read_to_string(&index).unwrap();
        let kept: Vec<_> = text.lines().skip(1).collect();
        fs::write(&index, kept.join("\n") + "\n").unwrap();
        let report = verify_dir(dir.path());
        assert_eq!(
            report.findings,
            vec![Finding::DanglingParent { id: b, parent: a }]
        );
    }

    #[test]
    fn missing_object_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let s = EvidenceStore::open(dir.path(), Arc::new(Clock::logical())).unwrap();
        let a = s.append(ArtifactDraft::text("filings", big(60))).unwrap();
        fs::remove_file(dir.path().join(object_rel_path(&a))).unwrap();
        let report = verify_dir(dir.path());
        assert!(matches!(
            &report.findings[0],
            Finding::MissingPayload { .. }
        ));
    }
}
