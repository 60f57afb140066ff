//! Executes a task graph phase by phase.
//!
//! Within a phase, tasks whose upstreams are all terminal run in batches of at
//! most `max_concurrency`. Events for a batch are emitted in task-id order, so
//! the log does not depend on thread interleaving. A failed task skips every
//! dependent reached through a required category; a closed gate does the same
//! for the compose and maintain phases.

mod events;
mod probe;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::category::{CategoryId, Phase};
use crate::planner::{LifecycleError, Task, TaskGraph, TaskStatus};
use crate::registry::Registry;
use crate::runners::{self, Builtins, CallRecorder, Provider, ResolvedInputs, TaskContext};
use crate::skills::{GateDecision, SkillEnv};
use crate::store::{ArtifactId, EvidenceStore};

pub use events::{EventKind, EventLog, Subscription, TaskEvent};
pub use probe::{Invocation, Probe};

pub const DEFAULT_CONCURRENCY: usize = 4;
pub const GATE_CLOSED: &str = "gate-closed";

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("task `{0}` is not in the graph")]
    UnknownTask(String),
    #[error("task `{task}` is {status}; only pending tasks can be stepped (use resume)")]
    NotPending { task: String, status: TaskStatus },
    #[error("skill `{0}` is not registered")]
    UnknownSkill(String),
    #[error(transparent)]
    Lifecycle(#[from] LifecycleError),
}

#[derive(Debug, Clone, Default)]
pub struct DispatchConfig {
    pub max_concurrency: usize,
    pub seed: Option<u64>,
    /// Stop after this phase completes, leaving later tasks pending.
    pub halt_after_phase: Option<Phase>,
    /// Skills treated as no-ops: the task completes with no outputs.
    pub disabled_skills: BTreeSet<String>,
    /// Where per-task provider call logs are written.
    pub calls_dir: Option<PathBuf>,
}

impl DispatchConfig {
    pub fn new() -> Self {
        Self {
            max_concurrency: DEFAULT_CONCURRENCY,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Done,
    Aborted,
    Halted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementResult {
    pub engagement_id: String,
    pub outcome: Outcome,
    pub statuses: BTreeMap<String, TaskStatus>,
    pub outputs: BTreeMap<String, Vec<ArtifactId>>,
}

impl EngagementResult {
    fn from_graph(graph: &TaskGraph, outcome: Outcome) -> Self {
        Self {
            engagement_id: graph.engagement_id.clone(),
            outcome,
            statuses: graph
                .tasks
                .iter()
                .map(|t| (t.id.clone(), t.status))
                .collect(),
            outputs: graph
                .tasks
                .iter()
                .map(|t| (t.id.clone(), t.outputs.clone()))
                .collect(),
        }
    }

    /// Statuses and sorted output sets, for comparing runs.
    pub fn canonical(&self) -> String {
        let outputs: BTreeMap<&String, BTreeSet<&ArtifactId>> = self
            .outputs
            .iter()
            .map(|(k, v)| (k, v.iter().collect()))
            .collect();
        serde_json::to_string(&(&self.outcome, &self.statuses, outputs)).expect("result serializes")
    }

    pub fn all_done(&self) -> bool {
        self.statuses.values().all(|s| *s == TaskStatus::Done)
    }
}

/// Result of running one task.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub status: TaskStatus,
    pub outputs: Vec<ArtifactId>,
    pub detail: Option<String>,
    pub warnings: Vec<String>,
    pub provider_calls: u32,
    pub consumed: BTreeSet<ArtifactId>,
}

type Checkpoint<'a> = Box<dyn Fn(&TaskGraph) + Send + Sync + 'a>;

pub struct Dispatcher<'a> {
    registry: &'a Registry,
    builtins: &'a Builtins,
    store: &'a EvidenceStore,
    env: &'a SkillEnv,
    provider: Option<Arc<dyn Provider>>,
    config: DispatchConfig,
    probe: Option<Arc<Probe>>,
    checkpoint: Option<Checkpoint<'a>>,
}

impl<'a> Dispatcher<'a> {
    pub fn new(
        registry: &'a Registry,
        builtins: &'a Builtins,
        store: &'a EvidenceStore,
        env: &'a SkillEnv,
    ) -> Self {
        Self {
            registry,
            builtins,
            store,
            env,
            provider: None,
            config: DispatchConfig::new(),
            probe: None,
            checkpoint: None,
        }
    }

    pub fn with_provider(mut self, provider: Arc<dyn Provider>) -> Self {
        self.provider = Some(provider);
        self
    }

    pub fn with_config(mut self, config: DispatchConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_probe(mut self, probe: Arc<Probe>) -> Self {
        self.probe = Some(probe);
        self
    }

    /// Called with the graph after every batch so callers can persist progress.
    pub fn with_checkpoint(mut self, f: impl Fn(&TaskGraph) + Send + Sync + 'a) -> Self {
        self.checkpoint = Some(Box::new(f));
        self
    }

    fn now(&self) -> chrono::DateTime<chrono::Utc> {
        self.store.clock().now()
    }

    /// Inputs for `task`: per needed category, the matching outputs of its upstream tasks.
    pub fn resolve_inputs(&self, graph: &TaskGraph, task: &Task) -> ResolvedInputs {
        let mut inputs: ResolvedInputs = BTreeMap::new();
        for need in &task.needs {
            let mut list: Vec<Arc<crate::store::Artifact>> = Vec::new();
            for edge in graph.incoming(&task.id).filter(|e| &e.category == need) {
                if let Some(up) = graph.task(&edge.from) {
                    for id in &up.outputs {
                        if let Some(a) = self.store.get(id) {
                            if &a.category == need && !list.iter().any(|x| x.id == a.id) {
                                list.push(a);
                            }
                        }
                    }
                }
            }
            inputs.insert(need.clone(), list);
        }
        inputs
    }

    /// Runs one pending task in isolation, without touching graph state or events.
    pub fn step(&self, graph: &TaskGraph, task_id: &str) -> Result<StepOutcome, DispatchError> {
        let task = graph
            .task(task_id)
            .ok_or_else(|| DispatchError::UnknownTask(task_id.to_string()))?;
        if task.status != TaskStatus::Pending {
            return Err(DispatchError::NotPending {
                task: task_id.to_string(),
                status: task.status,
            });
        }
        self.run_task(graph, task, 0)
    }

    fn run_task(
        &self,
        graph: &TaskGraph,
        task: &Task,
        batch: u64,
    ) -> Result<StepOutcome, DispatchError> {
        let skill = self
            .registry
            .get_skill(&task.skill)
            .ok_or_else(|| DispatchError::UnknownSkill(task.skill.clone()))?;
        if self.config.disabled_skills.contains(&task.skill) {
            return Ok(StepOutcome {
                status: TaskStatus::Done,
                outputs: Vec::new(),
                detail: Some("disabled".into()),
                warnings: Vec::new(),
                provider_calls: 0,
                consumed: BTreeSet::new(),
            });
        }
        let inputs = self.resolve_inputs(graph, task);
        let recorder = self.provider.as_ref().map(|p| {
            let r = CallRecorder::new(
                p.clone(),
                &task.id,
                skill.limits.max_provider_calls,
                self.config.seed,
            );
            match &self.config.calls_dir {
                Some(dir) => r.with_log(dir.join(format!("{}.log", task.id))),
                None => r,
            }
        });
        let ticker = task.params.get("ticker").and_then(|v| v.as_str());
        let mut ctx = TaskContext::new(
            &graph.engagement_id,
            &task.id,
            skill,
            ticker,
            &task.params,
            &inputs,
            self.store,
            self.registry,
            self.env,
            recorder.as_ref(),
        );
        let result = runners::run(&mut ctx, self.builtins);
        let mut consumed: BTreeSet<ArtifactId> =
            inputs.values().flatten().map(|a| a.id.clone()).collect();
        consumed.extend(ctx.reads().iter().cloned());
        let outputs = ctx.outputs().to_vec();
        let warnings = ctx.warnings().to_vec();
        drop(ctx);
        let provider_calls = recorder.as_ref().map_or(0, CallRecorder::call_count);
        if let Some(probe) = &self.probe {
            probe.record(Invocation {
                batch,
                engagement_id: graph.engagement_id.clone(),
                task_id: task.id.clone(),
                skill: task.skill.clone(),
                phase: task.phase,
                runner: task.runner,
                provider_calls,
                consumed: consumed.clone(),
            });
        }
        let (status, detail) = match result {
            Err(e) => (TaskStatus::Error, Some(e.to_string())),
            Ok(()) => match self.closed_gate(&outputs) {
                Some(decision) => (
                    TaskStatus::Error,
                    Some(format!("{GATE_CLOSED}: {}", decision.summary)),
                ),
                None => (TaskStatus::Done, None),
            },
        };
        Ok(StepOutcome {
            status,
            outputs,
            detail,
            warnings,
            provider_calls,
            consumed,
        })
    }

    fn closed_gate(&self, outputs: &[ArtifactId]) -> Option<GateDecision> {
        outputs
            .iter()
            .filter_map(|id| self.store.get(id))
            .filter(|a| a.category.as_str() == "gate_report")
            .filter_map(|a| a.json::<GateDecision>().ok())
            .find(|g| !g.passed)
    }

    /// Why `task` cannot run, if one of its required upstreams failed.
    fn blocked_by(&self, graph: &TaskGraph, task: &Task) -> Option<String> {
        let mut required_from: BTreeMap<&str, Vec<&CategoryId>> = BTreeMap::new();
        for e in graph.incoming(&task.id) {
            if !e.category.is_optional() {
                required_from
                    .entry(e.from.as_str())
                    .or_default()
                    .push(&e.category);
            }
        }
        required_from.into_iter().find_map(|(up, _)| {
            let u = graph.task(up)?;
            match u.status {
                TaskStatus::Error => {
                    let reason = u.detail.as_deref().unwrap_or("error");
                    if reason.starts_with(GATE_CLOSED) {
                        Some(format!("{GATE_CLOSED} at {up}"))
                    } else {
                        Some(format!("upstream {up} failed"))
                    }
                }
                TaskStatus::Skipped => Some(format!("upstream {up} skipped")),
                _ => None,
            }
        })
    }

    fn upstream_terminal(graph: &TaskGraph, task: &Task) -> bool {
        graph
            .incoming(&task.id)
            .all(|e| graph.task(&e.from).is_some_and(|u| u.status.is_terminal()))
    }

    /// Runs every pending task. Emits exactly one engagement terminal event
    /// unless halted.
    pub fn execute(
        &self,
        graph: &mut TaskGraph,
        log: &EventLog,
    ) -> Result<EngagementResult, DispatchError> {
        log.set_running(true);
        let result = self.execute_inner(graph, log);
        log.set_running(false);
        result
    }

    fn execute_inner(
        &self,
        graph: &mut TaskGraph,
        log: &EventLog,
    ) -> Result<EngagementResult, DispatchError> {
        let width = self.config.max_concurrency.max(1);
        let mut batch_no = 0u64;
        for phase in Phase::ALL {
            loop {
                let mut ready: Vec<String> = Vec::new();
                let mut to_skip: Vec<(String, String)> = Vec::new();
                for t in graph
                    .tasks
                    .iter()
                    .filter(|t| t.phase == phase && t.status == TaskStatus::Pending)
                {
                    if let Some(reason) = self.blocked_by(graph, t) {
                        to_skip.push((t.id.clone(), reason));
                    } else if Self::upstream_terminal(graph, t) {
                        ready.push(t.id.clone());
                    }
                }
                if ready.is_empty() && to_skip.is_empty() {
                    break;
                }
                for (id, reason) in to_skip {
                    let t = graph.task_mut(&id).expect("task exists");
                    t.transition(TaskStatus::Skipped)?;
                    t.detail = Some(reason.clone());
                    log.append(EventKind::TaskSkipped, Some(&id), Some(reason), self.now());
                }
                for chunk in ready.chunks(width) {
                    batch_no += 1;
                    self.run_batch(graph, log, chunk, batch_no)?;
                    if let Some(cp) = &self.checkpoint {
                        cp(graph);
                    }
                }
            }
            if self.config.halt_after_phase == Some(phase) {
                if let Some(cp) = &self.checkpoint {
                    cp(graph);
                }
                return Ok(EngagementResult::from_graph(graph, Outcome::Halted));
            }
        }
        // Anything still pending has an unsatisfiable upstream (should not happen
        // for validated graphs); mark it skipped so every task ends terminal.
        let stuck: Vec<String> = graph
            .tasks
            .iter()
            .filter(|t| t.status == TaskStatus::Pending)
            .map(|t| t.id.clone())
            .collect();
        for id in stuck {
            let t = graph.task_mut(&id).expect("task exists");
            t.transition(TaskStatus::Skipped)?;
            t.detail = Some("unreachable".into());
            log.append(
                EventKind::TaskSkipped,
                Some(&id),
                Some("unreachable".into()),
                self.now(),
            );
        }
        if let Some(cp) = &self.checkpoint {
            cp(graph);
        }
        let all_done = graph.tasks.iter().all(|t| t.status == TaskStatus::Done);
        let (kind, outcome, detail) = if all_done {
            (EventKind::EngagementDone, Outcome::Done, None)
        } else {
            let failed: Vec<&str> = graph
                .tasks
                .iter()
                .filter(|t| t.status == TaskStatus::Error)
                .map(|t| t.id.as_str())
                .collect();
            (
                EventKind::EngagementAborted,
                Outcome::Aborted,
                Some(format!("failed: {}", failed.join(", "))),
            )
        };
        log.append(kind, None, detail, self.now());
        Ok(EngagementResult::from_graph(graph, outcome))
    }

    fn run_batch(
        &self,
        graph: &mut TaskGraph,
        log: &EventLog,
        ids: &[String],
        batch: u64,
    ) -> Result<(), DispatchError> {
        for id in ids {
            let t = graph.task_mut(id).expect("task exists");
            t.transition(TaskStatus::InProgress)?;
            t.attempt_count += 1;
            t.detail = None;
            log.append(EventKind::TaskStarted, Some(id), None, self.now());
        }
        let snapshot: &TaskGraph = graph;
        let results: Vec<Result<StepOutcome, DispatchError>> = if ids.len() == 1 {
            vec![self.run_task(
                snapshot,
                snapshot.task(&ids[0]).expect("task exists"),
                batch,
            )]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = ids
                    .iter()
                    .map(|id| {
                        let task = snapshot.task(id).expect("task exists");
                        s.spawn(move || self.run_task(snapshot, task, batch))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("task worker panicked"))
                    .collect()
            })
        };
        for (id, res) in ids.iter().zip(results) {
            let out = res?;
            let t = graph.task_mut(id).expect("task exists");
            t.transition(out.status)?;
            t.detail = out.detail.clone();
            // An errored task keeps what it did append, e.g. a closed gate's report.
            t.outputs = out.outputs;
            let kind = if out.status == TaskStatus::Done {
                if !out.warnings.is_empty() && t.detail.is_none() {
                    t.detail = Some(out.warnings.join("; "));
                }
                EventKind::TaskDone
            } else {
                EventKind::TaskError
            };
            log.append(kind, Some(id), t.detail.clone(), self.now());
        }
        Ok(())
    }

    /// Re-attempts an engagement: done tasks keep their outputs, errored and
    /// skipped tasks go back to pending and are re-evaluated.
    pub fn resume(
        &self,
        graph: &mut TaskGraph,
        log: &EventLog,
    ) -> Result<EngagementResult, DispatchError> {
        reset_for_resume(graph)?;
        self.execute(graph, log)
    }
}

/// Moves error, skipped and interrupted tasks back to pending.
pub fn reset_for_resume(graph: &mut TaskGraph) -> Result<(), LifecycleError> {
    for t in &mut graph.tasks {
        match t.status {
            TaskStatus::Error | TaskStatus::Skipped => {
                t.transition(TaskStatus::Pending)?;
                t.detail = None;
            }
            // A crash mid-task leaves it in progress; treat it like an error.
            TaskStatus::InProgress => {
                t.status = TaskStatus::Error;
                t.transition(TaskStatus::Pending)?;
                t.detail = None;
            }
            _ => {}
        }
    }
    Ok(())
}

/// Task-level diagnostic prefix, e.g. `verifier-rejected`.
pub fn error_tag(detail: &str) -> &str {
    detail.split(':').next().unwrap_or(detail)
}
