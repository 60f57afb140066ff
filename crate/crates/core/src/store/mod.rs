//! Append-only, content-addressed evidence store.
//!
//! Every artifact produced during an engagement lands here with its lineage.
//! Identifiers are SHA-256 digests over a canonical serialization: the sorted
//! metadata fields first, then the payload bytes. `created_at` is recorded but
//! deliberately left out of the digest so reruns with identical inputs yield
//! identical identifiers.
//!
//! On disk the layout is
//!
//! ```text
//! store/index.ndjson                 one metadata record per line
//! store/objects/<first2>/<id>        payloads above the inline threshold
//! ```

mod disk;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::category::CategoryId;
use crate::clock::Clock;

pub use disk::{verify_dir, INLINE_LIMIT};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArtifactId(String);

impl ArtifactId {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First twelve hex digits, for display.
    pub fn short(&self) -> &str {
        &self.0[..self.0.len().min(12)]
    }
}

impl fmt::Display for ArtifactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Text,
    Structured,
    BinaryRef,
}

impl PayloadKind {
    fn as_str(self) -> &'static str {
        match self {
            PayloadKind::Text => "text",
            PayloadKind::Structured => "structured",
            PayloadKind::BinaryRef => "binary_ref",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: ArtifactId,
    pub category: CategoryId,
    pub engagement_id: String,
    pub producer_skill: String,
    pub producer_task: String,
    pub parent_ids: Vec<ArtifactId>,
    pub created_at: DateTime<Utc>,
    pub payload: String,
    pub payload_kind: PayloadKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ticker: Option<String>,
}

impl Artifact {
    pub fn json<T: DeserializeOwned>(&self) -> serde_json::Result<T> {
        serde_json::from_str(&self.payload)
    }

    pub fn json_value(&self) -> Option<serde_json::Value> {
        match self.payload_kind {
            PayloadKind::Structured => serde_json::from_str(&self.payload).ok(),
            _ => None,
        }
    }

    /// Digest of the artifact's canonical form; equals `id` for an intact artifact.
    pub fn recompute_id(&self) -> ArtifactId {
        content_id(
            self.category.as_str(),
            &self.engagement_id,
            &self.producer_skill,
            &self.producer_task,
            &self.parent_ids,
            self.payload_kind,
            self.ticker.as_deref(),
            self.payload.as_bytes(),
        )
    }
}

/// An artifact before the store assigns its identifier and timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactDraft {
    pub category: String,
    pub engagement_id: String,
    pub producer_skill: String,
    pub producer_task: String,
    pub parent_ids: Vec<ArtifactId>,
    pub payload: String,
    pub payload_kind: PayloadKind,
    pub ticker: Option<String>,
}

impl ArtifactDraft {
    pub fn text(category: &str, payload: impl Into<String>) -> Self {
        Self::with_kind(category, payload.into(), PayloadKind::Text)
    }

    pub fn structured<T: Serialize>(category: &str, value: &T) -> serde_json::Result<Self> {
        Ok(Self::with_kind(
            category,
            serde_json::to_string_pretty(value)?,
            PayloadKind::Structured,
        ))
    }

    fn with_kind(category: &str, payload: String, payload_kind: PayloadKind) -> Self {
        Self {
            category: category.to_string(),
            engagement_id: String::new(),
            producer_skill: String::new(),
            producer_task: String::new(),
            parent_ids: Vec::new(),
            payload,
            payload_kind,
            ticker: None,
        }
    }

    pub fn parents(mut self, parents: impl IntoIterator<Item = ArtifactId>) -> Self {
        self.parent_ids.extend(parents);
        self
    }

    pub fn ticker(mut self, ticker: Option<String>) -> Self {
        self.ticker = ticker;
        self
    }

    pub fn produced_by(mut self, engagement_id: &str, skill: &str, task: &str) -> Self {
        self.engagement_id = engagement_id.to_string();
        self.producer_skill = skill.to_string();
        self.producer_task = task.to_string();
        self
    }
}

#[allow(clippy::too_many_arguments)]
fn content_id(
    category: &str,
    engagement_id: &str,
    producer_skill: &str,
    producer_task: &str,
    parent_ids: &[ArtifactId],
    payload_kind: PayloadKind,
    ticker: Option<&str>,
    payload: &[u8],
) -> ArtifactId {
    let parents = parent_ids
        .iter()
        .map(ArtifactId::as_str)
        .collect::<Vec<_>>()
        .join(",");
    let header = format!(
        "category={category}\nengagement_id={engagement_id}\nparent_ids={parents}\npayload_kind={}\nproducer_skill={producer_skill}\nproducer_task={producer_task}\nticker={}\n\n",
        payload_kind.as_str(),
        ticker.unwrap_or(""),
    );
    let mut hasher = Sha256::new();
    hasher.update(header.as_bytes());
    hasher.update(payload);
    ArtifactId(hex::encode(hasher.finalize()))
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("dangling parent: {0} is not in the store")]
    DanglingParent(ArtifactId),
    #[error(transparent)]
    InvalidCategory(#[from] crate::category::InvalidCategory),
    #[error("unknown artifact id {0}")]
    UnknownId(ArtifactId),
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("store index record is malformed: {0}")]
    Malformed(String),
}

/// Exact-match conjunction over the provided fields.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactFilter {
    pub category: Option<String>,
    pub ticker: Option<String>,
    pub engagement_id: Option<String>,
    pub producer_skill: Option<String>,
}

impl ArtifactFilter {
    pub fn category(category: &str) -> Self {
        Self {
            category: Some(category.to_string()),
            ..Self::default()
        }
    }

    pub fn with_ticker(mut self, ticker: &str) -> Self {
        self.ticker = Some(ticker.to_string());
        self
    }

    pub fn with_engagement(mut self, engagement_id: &str) -> Self {
        self.engagement_id = Some(engagement_id.to_string());
        self
    }

    pub fn with_producer(mut self, skill: &str) -> Self {
        self.producer_skill = Some(skill.to_string());
        self
    }

    fn matches(&self, a: &Artifact) -> bool {
        self.category.as_deref().is_none_or(|c| a.category == c)
            && self
                .ticker
                .as_deref()
                .is_none_or(|t| a.ticker.as_deref() == Some(t))
            && self
                .engagement_id
                .as_deref()
                .is_none_or(|e| a.engagement_id == e)
            && self
                .producer_skill
                .as_deref()
                .is_none_or(|s| a.producer_skill == s)
    }
}

/// Ancestor closure of one artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub root: ArtifactId,
    /// Breadth-first from the root (root first), ties broken by id.
    pub nodes: Vec<ArtifactId>,
    /// (child, parent) pairs.
    pub edges: BTreeSet<(ArtifactId, ArtifactId)>,
}

impl Lineage {
    pub fn contains(&self, id: &ArtifactId) -> bool {
        self.nodes.contains(id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    Corrupt {
        id: ArtifactId,
        recomputed: ArtifactId,
    },
    DanglingParent {
        id: ArtifactId,
        parent: ArtifactId,
    },
    MissingPayload {
        id: ArtifactId,
        path: String,
    },
    MalformedRecord {
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub checked: usize,
    pub findings: Vec<Finding>,
}

impl IntegrityReport {
    pub fn is_ok(&self) -> bool {
        self.findings.is_empty()
    }
}

#[derive(Default)]
struct Inner {
    artifacts: Vec<Arc<Artifact>>,
    by_id: HashMap<ArtifactId, usize>,
}

/// The ledger. Appends are serialized behind one writer lock; reads share a
/// read lock and always observe a prefix of the append sequence.
pub struct EvidenceStore {
    inner: RwLock<Inner>,
    writer: Mutex<Option<disk::DiskWriter>>,
    root: Option<PathBuf>,
    clock: Arc<Clock>,
}

impl fmt::Debug for EvidenceStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvidenceStore")
            .field("root", &self.root)
            .field("len", &self.len())
            .finish()
    }
}

impl EvidenceStore {
    pub fn in_memory(clock: Arc<Clock>) -> Self {
        Self {
            inner: RwLock::new(Inner::default()),
            writer: Mutex::new(None),
            root: None,
            clock,
        }
    }

    /// Opens (or creates) a store directory, replaying its index.
    pub fn open(root: impl AsRef<Path>, clock: Arc<Clock>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        let (artifacts, writer) = disk::open(&root)?;
        let mut inner = Inner::default();
        for a in artifacts {
            inner.by_id.insert(a.id.clone(), inner.artifacts.len());
            inner.artifacts.push(Arc::new(a));
        }
        Ok(Self {
            inner: RwLock::new(inner),
            writer: Mutex::new(Some(writer)),
            root: Some(root),
            clock,
        })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn clock(&self) -> &Arc<Clock> {
        &self.clock
    }

    pub fn append(&self, draft: ArtifactDraft) -> Result<ArtifactId, StoreError> {
        let category = CategoryId::new(draft.category)?;
        if !category.is_canonical() {
            tracing::warn!(category = %category, "appending artifact with a non-canonical category");
        }
        let mut parents = draft.parent_ids;
        parents.sort();
        parents.dedup();

        let mut writer = self.writer.lock().expect("store writer poisoned");
        let created_at;
        let id;
        {
            let inner = self.inner.read().expect("store lock poisoned");
            for p in &parents {
                if !inner.by_id.contains_key(p) {
                    return Err(StoreError::DanglingParent(p.clone()));
                }
            }
            id = content_id(
                category.as_str(),
                &draft.engagement_id,
                &draft.producer_skill,
                &draft.producer_task,
                &parents,
                draft.payload_kind,
                draft.ticker.as_deref(),
                draft.payload.as_bytes(),
            );
            if inner.by_id.contains_key(&id) {
                return Ok(id);
            }
            let newest_parent = parents
                .iter()
                .map(|p| inner.artifacts[inner.by_id[p]].created_at)
                .max();
            let now = self.clock.now();
            created_at = newest_parent.map_or(now, |p| p.max(now));
        }
        let artifact = Artifact {
            id: id.clone(),
            category,
            engagement_id: draft.engagement_id,
            producer_skill: draft.producer_skill,
            producer_task: draft.producer_task,
            parent_ids: parents,
            created_at,
            payload: draft.payload,
            payload_kind: draft.payload_kind,
            ticker: draft.ticker,
        };
        if let Some(w) = writer.as_mut() {
            w.write(&artifact)?;
        }
        let mut inner = self.inner.write().expect("store lock poisoned");
        let slot = inner.artifacts.len();
        inner.by_id.insert(id.clone(), slot);
        inner.artifacts.push(Arc::new(artifact));
        Ok(id)
    }

    pub fn get(&self, id: &ArtifactId) -> Option<Arc<Artifact>> {
        let inner = self.inner.read().expect("store lock poisoned");
        inner.by_id.get(id).map(|&i| inner.artifacts[i].clone())
    }

    pub fn contains(&self, id: &ArtifactId) -> bool {
        self.inner
            .read()
            .expect("store lock poisoned")
            .by_id
            .contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.inner
            .read()
            .expect("store lock poisoned")
            .artifacts
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of index records; identifies the store state a derived view was built from.
    pub fn snapshot_marker(&self) -> usize {
        self.len()
    }

    /// All artifacts in append order.
    pub fn all(&self) -> Vec<Arc<Artifact>> {
        self.inner
            .read()
            .expect("store lock poisoned")
            .artifacts
            .clone()
    }

    /// Newest first; ties broken by ascending id.
    pub fn query(&self, filter: &ArtifactFilter) -> Vec<Arc<Artifact>> {
        let inner = self.inner.read().expect("store lock poisoned");
        let mut hits: Vec<_> = inner
            .artifacts
            .iter()
            .filter(|a| filter.matches(a))
            .cloned()
            .collect();
        hits.sort_by(|a, b| {
            b.created_at
                .cmp(&a.created_at)
                .then_with(|| a.id.cmp(&b.id))
        });
        hits
    }

    pub fn lineage(&self, id: &ArtifactId) -> Result<Lineage, StoreError> {
        let inner = self.inner.read().expect("store lock poisoned");
        if !inner.by_id.contains_key(id) {
            return Err(StoreError::UnknownId(id.clone()));
        }
        let mut seen = BTreeSet::new();
        let mut nodes = Vec::new();
        let mut edges = BTreeSet::new();
        let mut queue = VecDeque::from([id.clone()]);
        seen.insert(id.clone());
        while let Some(cur) = queue.pop_front() {
            let artifact = &inner.artifacts[inner.by_id[&cur]];
            nodes.push(cur.clone());
            for p in &artifact.parent_ids {
                edges.insert((cur.clone(), p.clone()));
                if seen.insert(p.clone()) {
                    queue.push_back(p.clone());
                }
            }
        }
        Ok(Lineage {
            root: id.clone(),
            nodes,
            edges,
        })
    }

    /// Recomputes every digest and checks lineage closure. Disk-backed stores
    /// are re-read from disk so on-disk tampering is visible.
    pub fn verify_integrity(&self) -> IntegrityReport {
        if let Some(root) = &self.root {
            // Hold the writer so no append interleaves with the scan.
            let _guard = self.writer.lock().expect("store writer poisoned");
            return verify_dir(root);
        }
        let inner = self.inner.read().expect("store lock poisoned");
        let mut report = IntegrityReport::default();
        let mut seen = BTreeSet::new();
        for a in &inner.artifacts {
            report.checked += 1;
            check_artifact(a, &seen, &mut report);
            seen.insert(a.id.clone());
        }
        report
    }
}

fn check_artifact(a: &Artifact, earlier: &BTreeSet<ArtifactId>, report: &mut IntegrityReport) {
    let recomputed = a.recompute_id();
    if recomputed != a.id {
        report.findings.push(Finding::Corrupt {
            id: a.id.clone(),
            recomputed,
        });
    }
    for p in &a.parent_ids {
        if !earlier.contains(p) {
            report.findings.push(Finding::DanglingParent {
                id: a.id.clone(),
                parent: p.clone(),
            });
        }
    }
}
