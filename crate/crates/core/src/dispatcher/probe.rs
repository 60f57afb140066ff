//! Instrumentation for tests and audits: which runners ran, in what order,
//! how many provider calls each made and which artifacts each consumed.

use std::collections::BTreeSet;
use std::sync::Mutex;

use serde::Serialize;

use crate::category::{Phase, RunnerKind};
use crate::store::ArtifactId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Invocation {
    /// Batch number; tasks in one batch may have run concurrently.
    pub batch: u64,
    pub engagement_id: String,
    pub task_id: String,
    pub skill: String,
    pub phase: Phase,
    pub runner: RunnerKind,
    pub provider_calls: u32,
    /// Resolved inputs plus everything read through tools.
    pub consumed: BTreeSet<ArtifactId>,
}

#[derive(Debug, Default)]
pub struct Probe {
    records: Mutex<Vec<Invocation>>,
}

impl Probe {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, inv: Invocation) {
        self.records.lock().expect("probe poisoned").push(inv);
    }

    pub fn invocations(&self) -> Vec<Invocation> {
        self.records.lock().expect("probe poisoned").clone()
    }

    pub fn clear(&self) {
        self.records.lock().expect("probe poisoned").clear();
    }

    pub fn invoked_tasks(&self) -> Vec<String> {
        self.invocations().into_iter().map(|i| i.task_id).collect()
    }

    pub fn count_in_phase(&self, phase: Phase) -> usize {
        self.invocations()
            .iter()
            .filter(|i| i.phase == phase)
            .count()
    }

    pub fn provider_calls(&self) -> u32 {
        self.invocations().iter().map(|i| i.provider_calls).sum()
    }

    /// Provider calls made by tasks in batches after the one that ran `task_id`.
    /// `None` when that task never ran.
    pub fn provider_calls_after(&self, task_id: &str) -> Option<u32> {
        let all = self.invocations();
        let batch = all
            .iter()
            .filter(|i| i.task_id == task_id)
            .map(|i| i.batch)
            .max()?;
        Some(
            all.iter()
                .filter(|i| i.batch > batch)
                .map(|i| i.provider_calls)
                .sum(),
        )
    }

    pub fn consumed_by(&self, task_id: &str) -> BTreeSet<ArtifactId> {
        self.invocations()
            .into_iter()
            .filter(|i| i.task_id == task_id)
            .flat_map(|i| i.consumed)
            .collect()
    }
}
