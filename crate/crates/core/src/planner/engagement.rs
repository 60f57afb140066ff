use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{derive_dag, PlanError, PlanTarget, TaskGraph, TemplateCatalog};
use crate::registry::Registry;

/// The internal request format shared by the API and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementRequest {
    pub engagement_type: String,
    pub ticker: String,
    pub persona_id: String,
    pub workflow_id: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl EngagementRequest {
    pub fn new(engagement_type: &str, ticker: &str, persona_id: &str, workflow_id: &str) -> Self {
        Self {
            engagement_type: engagement_type.into(),
            ticker: ticker.into(),
            persona_id: persona_id.into(),
            workflow_id: workflow_id.into(),
            params: Default::default(),
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        for (name, value) in [
            ("engagement_type", &self.engagement_type),
            ("ticker", &self.ticker),
            ("persona_id", &self.persona_id),
            ("workflow_id", &self.workflow_id),
        ] {
            if value.trim().is_empty() {
                return Err(PlanError::InvalidRequest(format!(
                    "{name} must be non-empty"
                )));
            }
        }
        Ok(())
    }

    /// Engagement id derived from the request and the store-local sequence
    /// number, so fresh stores replaying the same request agree on ids.
    pub fn engagement_id(&self, sequence: u64) -> String {
        let canonical = serde_json::to_string(self).expect("request serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        h.update(sequence.to_le_bytes());
        format!("eng-{:04}-{}", sequence, &hex::encode(h.finalize())[..10])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementRecord {
    pub id: String,
    pub request: EngagementRequest,
    pub template_id: String,
    pub objective: String,
    pub created_at: DateTime<Utc>,
    pub graph_version: u32,
}

/// Resolves the workflow, checks the persona and derives the validated graph.
pub fn plan_engagement(
    request: &EngagementRequest,
    engagement_id: &str,
    catalog: &TemplateCatalog,
    registry: &Registry,
    now: DateTime<Utc>,
) -> Result<(EngagementRecord, TaskGraph), PlanError> {
    request.validate()?;
    let template = catalog
        .get(&request.workflow_id)
        .ok_or_else(|| PlanError::UnknownWorkflow(request.workflow_id.clone()))?;
    if registry.persona(&request.persona_id).is_none() {
        return Err(PlanError::UnknownPersona(request.persona_id.clone()));
    }
    let objective = request
        .params
        .get("objective")
        .and_then(|v| v.as_str())
        .map(String::from)
        .unwrap_or_else(|| format!("{} on {}", template.engagement_type, request.ticker));

    let mut params = request.params.clone();
    params.insert("workflow_id".into(), request.workflow_id.clone().into());
    params.insert("objective".into(), objective.clone().into());
    let target = PlanTarget {
        engagement_id: engagement_id.to_string(),
        ticker: Some(request.ticker.clone()),
        persona_id: Some(request.persona_id.clone()),
        params,
        requested_at: now,
    };
    let graph = derive_dag(template, &target, registry)?;
    let record = EngagementRecord {
        id: engagement_id.to_string(),
        request: request.clone(),
        template_id: template.id.clone(),
        objective,
        created_at: now,
        graph_version: graph.version,
    };
    Ok((record, graph))
}
