//! Planner: derives a typed task DAG by walking declared contracts backwards
//! from the template's compose skill until only setup-phase leaves remain.

mod engagement;
mod template;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::category::{CategoryId, Phase, RunnerKind};
use crate::registry::{Registry, SkillSpec, Violation};
use crate::store::ArtifactId;

pub use engagement::{plan_engagement, EngagementRecord, EngagementRequest};
pub use template::{PlanTemplate, TemplateCatalog, PERSONA_PIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    InProgress,
    Done,
    Error,
    Skipped,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            TaskStatus::Done | TaskStatus::Error | TaskStatus::Skipped
        )
    }

    /// The lifecycle automaton. Anything not listed here is a defect.
    pub fn can_transition(self, to: TaskStatus) -> bool {
        use TaskStatus::*;
        matches!(
            (self, to),
            (Pending, InProgress)
                | (InProgress, Done)
                | (InProgress, Error)
                | (Pending, Skipped)
                | (Skipped, Pending)
                | (Error, Pending)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Pending => "pending",
            TaskStatus::InProgress => "in_progress",
            TaskStatus::Done => "done",
            TaskStatus::Error => "error",
            TaskStatus::Skipped => "skipped",
        }
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("illegal task transition {from} -> {to} for `{task}`")]
pub struct LifecycleError {
    pub task: String,
    pub from: TaskStatus,
    pub to: TaskStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub skill: String,
    pub phase: Phase,
    pub runner: RunnerKind,
    pub needs: BTreeSet<CategoryId>,
    pub produces: BTreeSet<CategoryId>,
    pub params: serde_json::Map<String, serde_json::Value>,
    pub status: TaskStatus,
    pub attempt_count: u32,
    pub outputs: Vec<ArtifactId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Task {
    fn from_spec(spec: &SkillSpec, params: serde_json::Map<String, serde_json::Value>) -> Self {
        Self {
            id: spec.id.clone(),
            skill: spec.id.clone(),
            phase: spec.phase,
            runner: spec.runner,
            needs: spec.needs.clone(),
            produces: spec.produces.clone(),
            params,
            status: TaskStatus::Pending,
            attempt_count: 0,
            outputs: Vec::new(),
            detail: None,
        }
    }

    pub fn transition(&mut self, to: TaskStatus) -> Result<(), LifecycleError> {
        if self.status.can_transition(to) {
            self.status = to;
            Ok(())
        } else {
            Err(LifecycleError {
                task: self.id.clone(),
                from: self.status,
                to,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub category: CategoryId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGraph {
    pub engagement_id: String,
    pub version: u32,
    pub template_id: String,
    pub compose_task: String,
    /// Sorted by id.
    pub tasks: Vec<Task>,
    /// Sorted lexicographically.
    pub edges: Vec<Edge>,
    /// Categories supplied by engagement parameters rather than a task.
    #[serde(default)]
    pub seeds: BTreeSet<CategoryId>,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TaskGraph {
    pub fn task(&self, id: &str) -> Option<&Task> {
        self.tasks
            .binary_search_by(|t| t.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.tasks[i])
    }

    pub fn task_mut(&mut self, id: &str) -> Option<&mut Task> {
        self.tasks
            .binary_search_by(|t| t.id.as_str().cmp(id))
            .ok()
            .map(move |i| &mut self.tasks[i])
    }

    pub fn incoming(&self, id: &str) -> impl Iterator<Item = &Edge> {
        let id = id.to_string();
        self.edges.iter().filter(move |e| e.to == id)
    }

    pub fn outgoing(&self, id: &str) -> impl Iterator<Item = &Edge> {
        let id = id.to_string();
        self.edges.iter().filter(move |e| e.from == id)
    }

    pub fn skill_ids(&self) -> BTreeSet<String> {
        self.tasks.iter().map(|t| t.skill.clone()).collect()
    }

    /// Tasks downstream of `id` (excluding itself).
    pub fn descendants(&self, id: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut queue = VecDeque::from([id.to_string()]);
        while let Some(cur) = queue.pop_front() {
            for e in self.outgoing(&cur) {
                if out.insert(e.to.clone()) {
                    queue.push_back(e.to.clone());
                }
            }
        }
        out
    }

    fn canonicalize(&mut self) {
        self.tasks.sort_by(|a, b| a.id.cmp(&b.id));
        self.edges.sort();
        self.edges.dedup();
    }

    /// The canonical document: tasks sorted by id, edges sorted.
    pub fn to_canonical_json(&self) -> String {
        let mut g = self.clone();
        g.canonicalize();
        serde_json::to_string_pretty(&g).expect("task graph serializes")
    }

    /// A topological order with phase as the primary key and id as tie-break.
    pub fn topological_order(&self) -> Option<Vec<String>> {
        topo_order(
            self.tasks.iter().map(|t| (t.id.clone(), t.phase)),
            self.edges.iter().map(|e| (e.from.clone(), e.to.clone())),
        )
        .ok()
    }
}

/// Kahn's algorithm; on a cycle returns the ids left unsorted.
fn topo_order(
    nodes: impl Iterator<Item = (String, Phase)>,
    edges: impl Iterator<Item = (String, String)>,
) -> Result<Vec<String>, Vec<String>> {
    let phases: BTreeMap<String, Phase> = nodes.collect();
    let mut indeg: BTreeMap<&str, usize> = phases.keys().map(|k| (k.as_str(), 0)).collect();
    let mut adj: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (from, to) in edges {
        if adj.entry(from).or_default().insert(to.clone()) {
            if let Some(d) = indeg.get_mut(to.as_str()) {
                *d += 1;
            }
        }
    }
    let mut ready: BTreeSet<(Phase, String)> = indeg
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(k, _)| (phases[*k], k.to_string()))
        .collect();
    let mut order = Vec::with_capacity(phases.len());
    while let Some(next) = ready.pop_first() {
        if let Some(succ) = adj.get(&next.1) {
            for s in succ {
                if let Some(d) = indeg.get_mut(s.as_str()) {
                    *d -= 1;
                    if *d == 0 {
                        ready.insert((phases[s], s.clone()));
                    }
                }
            }
        }
        order.push(next.1);
    }
    if order.len() == phases.len() {
        Ok(order)
    } else {
        let sorted: BTreeSet<_> = order.into_iter().collect();
        Err(phases
            .keys()
            .filter(|k| !sorted.contains(*k))
            .cloned()
            .collect())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("no producer registered for: {}", .0.join(", "))]
    MissingProducer(Vec<String>),
    #[error("cycle detected among: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("unknown workflow `{0}`")]
    UnknownWorkflow(String),
    #[error("unknown persona `{0}`")]
    UnknownPersona(String),
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("derived graph violates invariants: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidGraph(Vec<Violation>),
}

/// What a plan is derived for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTarget {
    pub engagement_id: String,
    #[serde(default)]
    pub ticker: Option<String>,
    #[serde(default)]
    pub persona_id: Option<String>,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    pub requested_at: DateTime<Utc>,
}

/// Resolves `$persona` pins and the compose root against the registry.
fn resolve_pins(
    template: &PlanTemplate,
    target: &PlanTarget,
    registry: &Registry,
) -> Result<(String, BTreeMap<String, String>), PlanError> {
    let persona_skill_for = |category: &str| -> Result<String, PlanError> {
        let pid = target.persona_id.as_deref().ok_or_else(|| {
            PlanError::InvalidRequest(format!("template `{}` needs a persona", template.id))
        })?;
        let persona = registry
            .persona(pid)
            .ok_or_else(|| PlanError::UnknownPersona(pid.to_string()))?;
        persona
            .skills
            .iter()
            .find(|s| {
                registry
                    .get_skill(s)
                    .is_some_and(|spec| spec.produces_category(category))
            })
            .cloned()
            .ok_or_else(|| PlanError::MissingProducer(vec![category.to_string()]))
    };

    let mut pins = BTreeMap::new();
    for (cat, skill) in &template.pinned_producers {
        let resolved = if skill == PERSONA_PIN {
            persona_skill_for(cat.as_str())?
        } else {
            skill.clone()
        };
        pins.insert(cat.to_string(), resolved);
    }
    let compose = if template.compose_skill == PERSONA_PIN {
        persona_skill_for("memo")?
    } else {
        template.compose_skill.clone()
    };
    Ok((compose, pins))
}

/// Derives the task DAG for `template` and `target` over `registry`.
///
/// Each need is satisfied by exactly one producer: the template-pinned skill
/// if any, otherwise the lexicographically smallest producer id. Optional
/// categories with no producer are left uncovered.
pub fn derive_dag(
    template: &PlanTemplate,
    target: &PlanTarget,
    registry: &Registry,
) -> Result<TaskGraph, PlanError> {
    let (compose_id, pins) = resolve_pins(template, target, registry)?;
    let compose = registry
        .get_skill(&compose_id)
        .ok_or_else(|| PlanError::UnknownSkill(compose_id.clone()))?;
    if compose.phase != Phase::Compose {
        return Err(PlanError::InvalidTemplate(format!(
            "compose skill `{compose_id}` is in phase {}",
            compose.phase
        )));
    }

    let mut warnings = Vec::new();
    let mut choose = |category: &str, consumer: &str| -> Option<String> {
        let pinned = pins.get(category).map(String::as_str);
        let producers = registry.producers_for(category, pinned);
        if producers.len() > 1 && pinned.is_none() {
            warnings.push(format!(
                "tie-break for `{category}` needed by `{consumer}`: chose `{}` over {}",
                producers[0],
                producers[1..].join(", ")
            ));
        }
        producers.into_iter().next()
    };

    let mut roots = vec![compose_id.clone()];
    if template.requires(Phase::Maintain) {
        let writer = choose("graph_facts", &compose_id)
            .ok_or_else(|| PlanError::MissingProducer(vec!["graph_facts".to_string()]))?;
        roots.push(writer);
    }

    let mut in_graph: BTreeSet<String> = BTreeSet::new();
    let mut edges = BTreeSet::new();
    let mut missing = BTreeSet::new();
    let mut queue: VecDeque<String> = VecDeque::new();
    for r in roots {
        if in_graph.insert(r.clone()) {
            queue.push_back(r);
        }
    }
    while let Some(skill_id) = queue.pop_front() {
        let spec = registry
            .get_skill(&skill_id)
            .ok_or_else(|| PlanError::UnknownSkill(skill_id.clone()))?;
        for need in &spec.needs {
            match choose(need.as_str(), &skill_id) {
                Some(p) => {
                    edges.insert(Edge {
                        from: p.clone(),
                        to: skill_id.clone(),
                        category: need.clone(),
                    });
                    if in_graph.insert(p.clone()) {
                        queue.push_back(p);
                    }
                }
                None if need.is_optional() => {}
                None => {
                    missing.insert(need.to_string());
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(PlanError::MissingProducer(missing.into_iter().collect()));
    }

    let specs: BTreeMap<&str, &SkillSpec> = in_graph
        .iter()
        .map(|id| (id.as_str(), registry.get_skill(id).expect("resolved above")))
        .collect();
    if let Err(stuck) = topo_order(
        specs.iter().map(|(id, s)| (id.to_string(), s.phase)),
        edges.iter().map(|e| (e.from.clone(), e.to.clone())),
    ) {
        return Err(PlanError::CycleDetected(find_cycle(&stuck, &edges)));
    }

    let mut params = template.params.clone();
    params.extend(target.params.clone());
    params.insert("template_id".into(), template.id.clone().into());
    params.insert(
        "engagement_type".into(),
        template.engagement_type.clone().into(),
    );
    if let Some(t) = &target.ticker {
        params.insert("ticker".into(), t.clone().into());
    }
    if let Some(p) = &target.persona_id {
        params.insert("persona_id".into(), p.clone().into());
    }

    let mut graph = TaskGraph {
        engagement_id: target.engagement_id.clone(),
        version: 1,
        template_id: template.id.clone(),
        compose_task: compose_id,
        tasks: specs
            .values()
            .map(|s| Task::from_spec(s, params.clone()))
            .collect(),
        edges: edges.into_iter().collect(),
        seeds: BTreeSet::new(),
        created_at: target.requested_at,
        warnings,
    };
    graph.canonicalize();
    let report = validate_dag(&graph);
    if !report.is_empty() {
        return Err(PlanError::InvalidGraph(report));
    }
    Ok(graph)
}

/// One concrete cycle within the nodes Kahn's algorithm could not sort.
fn find_cycle(stuck: &[String], edges: &BTreeSet<Edge>) -> Vec<String> {
    let stuck: BTreeSet<&str> = stuck.iter().map(String::as_str).collect();
    let next = |n: &str| -> Option<String> {
        edges
            .iter()
            .find(|e| e.from == n && stuck.contains(e.to.as_str()))
            .map(|e| e.to.clone())
    };
    let Some(start) = stuck.iter().next() else {
        return Vec::new();
    };
    // Every stuck node has a stuck successor; walking must revisit a node.
    let mut path = vec![start.to_string()];
    loop {
        let cur = path.last().unwrap().clone();
        let Some(n) = next(&cur) else { return path };
        if let Some(pos) = path.iter().position(|p| *p == n) {
            let mut cycle = path[pos..].to_vec();
            cycle.push(n);
            return cycle;
        }
        path.push(n);
    }
}

fn v(rule: &str, message: String) -> Violation {
    Violation {
        rule: rule.to_string(),
        message,
    }
}

/// Checks the five structural invariants. Empty report means valid.
pub fn validate_dag(graph: &TaskGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut tasks: BTreeMap<&str, &Task> = BTreeMap::new();
    for t in &graph.tasks {
        if tasks.insert(t.id.as_str(), t).is_some() {
            out.push(v(
                "duplicate-task",
                format!("task `{}` appears twice", t.id),
            ));
        }
    }

    for e in &graph.edges {
        let (Some(p), Some(c)) = (tasks.get(e.from.as_str()), tasks.get(e.to.as_str())) else {
            out.push(v(
                "dangling-edge",
                format!(
                    "edge {} -> {} ({}) references an unknown task",
                    e.from, e.to, e.category
                ),
            ));
            continue;
        };
        if !p.produces.contains(&e.category) || !c.needs.contains(&e.category) {
            out.push(v(
                "typing",
                format!(
                    "edge {} -> {} carries `{}` which is not in producer.produces ∩ consumer.needs",
                    e.from, e.to, e.category
                ),
            ));
        }
        if p.phase > c.phase {
            out.push(v(
                "phase-monotonicity",
                format!(
                    "edge {} ({}) -> {} ({}) goes backwards",
                    e.from, p.phase, e.to, c.phase
                ),
            ));
        }
    }

    if let Err(stuck) = topo_order(
        tasks.values().map(|t| (t.id.clone(), t.phase)),
        graph
            .edges
            .iter()
            .filter(|e| tasks.contains_key(e.from.as_str()) && tasks.contains_key(e.to.as_str()))
            .map(|e| (e.from.clone(), e.to.clone())),
    ) {
        out.push(v("acyclic", format!("cycle among {}", stuck.join(", "))));
    }

    for t in tasks.values() {
        let covered: BTreeSet<&CategoryId> = graph
            .edges
            .iter()
            .filter(|e| e.to == t.id)
            .map(|e| &e.category)
            .collect();
        for need in &t.needs {
            if !covered.contains(need) && !graph.seeds.contains(need) && !need.is_optional() {
                out.push(v(
                    "closed",
                    format!("need `{need}` of task `{}` has no incoming edge", t.id),
                ));
            }
        }
        let is_leaf = !graph.edges.iter().any(|e| e.to == t.id);
        if is_leaf && t.phase != Phase::Setup && t.id != graph.compose_task {
            out.push(v(
                "rooted",
                format!("leaf task `{}` is in phase {}, not setup", t.id, t.phase),
            ));
        }
    }
    out
}
