//! The engine facade shared by the API service, the CLI and the examples.
//!
//! A pod home directory holds everything that outlives a process:
//!
//! ```text
//! <home>/store/                      evidence store
//! <home>/engagements/<id>/engagement.json
//! <home>/engagements/<id>/graph.json
//! <home>/engagements/<id>/events.log
//! <home>/engagements/<id>/calls/     provider call logs
//! <home>/packs/<id>/pack.json        onboarded and distilled packs
//! <home>/idempotency.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::category::{Phase, RunnerKind};
use crate::clock::Clock;
use crate::dispatcher::{
    DispatchConfig, DispatchError, Dispatcher, EngagementResult, EventLog, Probe,
};
use crate::distill::{
    export_pack, DistillError, DistillRun, Distiller, GenerateOptions, SourceCorpus,
};
use crate::graph::{provenance_trail, GraphError, ResearchGraph, TrailEntry};
use crate::planner::{
    plan_engagement, EngagementRecord, EngagementRequest, PlanError, TaskGraph, TemplateCatalog,
};
use crate::registry::{load_pack_dir, PackManifest, PersonaPack, Registry, RegistryError};
use crate::runners::{Builtins, HttpProvider, Provider, StubProvider};
use crate::skills::{self, EdgarClient, MemoDocument, ReqwestTransport, SkillEnv};
use crate::store::{Artifact, ArtifactId, EvidenceStore, StoreError};

/// Shipped assets: skills, templates, packs, fixtures, corpora.
pub fn default_assets_dir() -> PathBuf {
    std::env::var_os("POD_ASSETS")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets"))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProviderSettings {
    Stub,
    Http {
        endpoint: String,
        api_key: Option<String>,
        model: String,
    },
}

#[derive(Debug, Clone)]
pub struct PodConfig {
    pub home: PathBuf,
    pub assets: PathBuf,
    pub fixtures: PathBuf,
    pub seed: Option<u64>,
    pub concurrency: usize,
    /// Timestamps from a logical clock, for bit-identical replays.
    pub logical_clock: bool,
    pub provider: ProviderSettings,
    /// Enables the live EDGAR client when set.
    pub edgar_user_agent: Option<String>,
}

impl PodConfig {
    pub fn new(home: impl Into<PathBuf>) -> Self {
        let assets = default_assets_dir();
        Self {
            home: home.into(),
            fixtures: assets.join("fixtures"),
            assets,
            seed: None,
            concurrency: crate::dispatcher::DEFAULT_CONCURRENCY,
            logical_clock: false,
            provider: ProviderSettings::Stub,
            edgar_user_agent: None,
        }
    }

    pub fn fixtures(mut self, dir: impl Into<PathBuf>) -> Self {
        self.fixtures = dir.into();
        self
    }

    pub fn seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn logical_clock(mut self, on: bool) -> Self {
        self.logical_clock = on;
        self
    }
}

#[derive(Debug, Error)]
pub enum PodError {
    #[error("unknown-persona: {0}")]
    UnknownPersona(String),
    #[error("unknown-workflow: {0}")]
    UnknownWorkflow(String),
    #[error("unknown-ticker: no fixture for {0}")]
    UnknownTicker(String),
    #[error("unknown-engagement: {0}")]
    UnknownEngagement(String),
    #[error("unknown-artifact: {0}")]
    UnknownArtifact(String),
    #[error("not-a-memo: {0}")]
    NotAMemo(String),
    #[error("engagement-running: {0}")]
    Running(String),
    #[error(
        "idempotency-conflict: key `{key}` was used for {engagement_id} with a different request"
    )]
    IdempotencyConflict { key: String, engagement_id: String },
    #[error(transparent)]
    Plan(PlanError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<PlanError> for PodError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::UnknownPersona(p) => PodError::UnknownPersona(p),
            PlanError::UnknownWorkflow(w) | PlanError::UnknownTemplate(w) => {
                PodError::UnknownWorkflow(w)
            }
            other => PodError::Plan(other),
        }
    }
}

impl PodError {
    /// Stable machine-readable kind.
    pub fn tag(&self) -> &'static str {
        match self {
            Self::UnknownPersona(_) => "unknown-persona",
            Self::UnknownWorkflow(_) => "unknown-workflow",
            Self::UnknownTicker(_) => "unknown-ticker",
            Self::UnknownEngagement(_) => "unknown-engagement",
            Self::UnknownArtifact(_) => "unknown-artifact",
            Self::NotAMemo(_) => "not-a-memo",
            Self::Running(_) => "engagement-running",
            Self::IdempotencyConflict { .. } => "idempotency-conflict",
            Self::Plan(PlanError::InvalidRequest(_)) => "invalid-request",
            Self::Plan(_) => "plan-failed",
            Self::Dispatch(_) => "dispatch-failed",
            Self::Registry(_) => "registry-rejected",
            Self::Store(_) => "store-error",
            Self::Distill(e) => e.tag(),
            Self::Graph(GraphError::UnknownTheme(_)) => "unknown-theme",
            Self::Graph(GraphError::UnknownMemo(_)) => "unknown-memo",
            Self::Graph(GraphError::UnknownTicker(_)) => "unknown-ticker",
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
        }
    }

    /// Caller mistakes, as opposed to engine or environment failures.
    pub fn is_client_error(&self) -> bool {
        matches!(
            self,
            Self::UnknownPersona(_)
                | Self::UnknownWorkflow(_)
                | Self::UnknownTicker(_)
                | Self::Plan(PlanError::InvalidRequest(_))
                | Self::Registry(_)
                | Self::Distill(_)
        )
    }

    pub fn is_not_found(&self) -> bool {
        matches!(
            self,
            Self::UnknownEngagement(_)
                | Self::UnknownArtifact(_)
                | Self::NotAMemo(_)
                | Self::Graph(_)
        )
    }

    pub fn is_conflict(&self) -> bool {
        matches!(self, Self::Running(_) | Self::IdempotencyConflict { .. })
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PodError + '_ {
    move |source| PodError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PodError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PodError> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| PodError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}

/// Per-run knobs that do not belong in the request.
#[derive(Clone, Default)]
pub struct RunOptions {
    pub disabled_skills: BTreeSet<String>,
    pub halt_after_phase: Option<Phase>,
    pub probe: Option<Arc<Probe>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementSnapshot {
    pub record: EngagementRecord,
    pub graph: TaskGraph,
    pub running: bool,
}

/// One library row per skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillEntry {
    pub id: String,
    pub name: String,
    pub phase: Phase,
    pub runner: RunnerKind,
    pub needs: Vec<String>,
    pub produces: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner_persona: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillGroup {
    pub phase: Phase,
    pub ui_phase: String,
    pub runner: RunnerKind,
    pub skills: Vec<SkillEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowEntry {
    pub id: String,
    pub engagement_type: String,
    pub compose_skill: String,
    pub required_phases: Vec<Phase>,
    pub required_sections: Vec<String>,
    pub description: String,
    /// Personas naming this template among their workflows.
    pub personas: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub skill: String,
    pub produces: Vec<String>,
    pub modes: Vec<String>,
    pub fixture_tickers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactView {
    pub artifact: Artifact,
    pub lineage: Vec<TrailEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedCitation {
    pub id: ArtifactId,
    pub category: String,
    pub producer: String,
    pub excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoView {
    pub id: ArtifactId,
    pub memo: MemoDocument,
    pub citations: Vec<ResolvedCitation>,
}

pub struct Pod {
    config: PodConfig,
    registry: RwLock<Arc<Registry>>,
    catalog: TemplateCatalog,
    builtins: Builtins,
    env: SkillEnv,
    store: EvidenceStore,
    provider: Arc<dyn Provider>,
    logs: Mutex<BTreeMap<String, Arc<EventLog>>>,
    create_lock: Mutex<()>,
    idempotency_lock: Mutex<()>,
}

impl Pod {
    pub fn open(config: PodConfig) -> Result<Self, PodError> {
        for dir in ["store", "engagements", "packs"] {
            let p = config.home.join(dir);
            std::fs::create_dir_all(&p).map_err(io(&p))?;
        }
        let clock = Arc::new(if config.logical_clock {
            Clock::logical()
        } else {
            Clock::system()
        });
        let store = EvidenceStore::open(config.home.join("store"), clock)?;
        let catalog = TemplateCatalog::load_dir(&config.assets.join("templates"))?;

        let mut registry = Registry::new();
        registry.register_skill_dir(&config.assets.join("skills"))?;
        for pack in ["generic", "buffett"] {
            registry
                .onboard_persona_pack(load_pack_dir(&config.assets.join("packs").join(pack))?)?;
        }
        let packs_dir = config.home.join("packs");
        let mut extra: Vec<PathBuf> = std::fs::read_dir(&packs_dir)
            .map_err(io(&packs_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("pack.json").is_file())
            .collect();
        extra.sort();
        for dir in extra {
            let manifest = load_pack_dir(&dir)?;
            if registry.persona(&manifest.id).is_none() {
                registry.onboard_persona_pack(manifest)?;
            }
        }

        let mut env = SkillEnv::new(&config.fixtures);
        if let Some(agent) = &config.edgar_user_agent {
            let transport =
                ReqwestTransport::new(agent).map_err(|e| PodError::Config(e.to_string()))?;
            env = env.with_edgar(Arc::new(EdgarClient::new(Arc::new(transport))));
        }
        let provider: Arc<dyn Provider> = match &config.provider {
            ProviderSettings::Stub => Arc::new(StubProvider),
            ProviderSettings::Http {
                endpoint,
                api_key,
                model,
            } => Arc::new(
                HttpProvider::new(endpoint, api_key.clone(), model)
                    .map_err(|e| PodError::Config(e.to_string()))?,
            ),
        };
        Ok(Self {
            config,
            registry: RwLock::new(Arc::new(registry)),
            catalog,
            builtins: skills::builtins(),
            env,
            store,
            provider,
            logs: Mutex::new(BTreeMap::new()),
            create_lock: Mutex::new(()),
            idempotency_lock: Mutex::new(()),
        })
    }

    /// Swaps the model provider, e.g. for an instrumented or scripted one.
    pub fn with_provider(mut self, provider: Arc<dyn Provider>) -> Self {
        self.provider = provider;
        self
    }

    pub fn config(&self) -> &PodConfig {
        &self.config
    }

    pub fn registry(&self) -> Arc<Registry> {
        Arc::clone(&self.registry.read().expect("registry lock poisoned"))
    }

    pub fn catalog(&self) -> &TemplateCatalog {
        &self.catalog
    }

    pub fn store(&self) -> &EvidenceStore {
        &self.store
    }

    pub fn env(&self) -> &SkillEnv {
        &self.env
    }

    fn engagement_dir(&self, id: &str) -> PathBuf {
        self.config.home.join("engagements").join(id)
    }

    /// A request for `workflow`, with the engagement type taken from its template.
    pub fn request(
        &self,
        ticker: &str,
        persona: &str,
        workflow: &str,
    ) -> Result<EngagementRequest, PodError> {
        let t = self
            .catalog
            .get(workflow)
            .ok_or_else(|| PodError::UnknownWorkflow(workflow.into()))?;
        Ok(EngagementRequest::new(
            &t.engagement_type,
            &ticker.to_uppercase(),
            persona,
            workflow,
        ))
    }

    fn check_request(
        &self,
        request: &EngagementRequest,
        registry: &Registry,
    ) -> Result<(), PodError> {
        request.validate()?;
        if registry.persona(&request.persona_id).is_none() {
            return Err(PodError::UnknownPersona(request.persona_id.clone()));
        }
        if !self.catalog.contains(&request.workflow_id) {
            return Err(PodError::UnknownWorkflow(request.workflow_id.clone()));
        }
        let live = request.params.get("source_mode").and_then(|v| v.as_str()) == Some("live");
        if !live && !self.env.has_fixture(&request.ticker) {
            return Err(PodError::UnknownTicker(request.ticker.clone()));
        }
        Ok(())
    }

    /// Plans and persists a new engagement without running it.
    pub fn create_engagement(
        &self,
        request: &EngagementRequest,
    ) -> Result<(EngagementRecord, TaskGraph), PodError> {
        let registry = self.registry();
        self.check_request(request, &registry)?;
        let _guard = self.create_lock.lock().expect("create lock poisoned");
        let sequence = self.engagement_ids()?.len() as u64 + 1;
        let id = request.engagement_id(sequence);
        let (mut record, mut graph) = plan_engagement(
            request,
            &id,
            &self.catalog,
            &registry,
            self.store.clock().now(),
        )?;
        if let Some(seed) = self.config.seed {
            record.request.params.entry("seed").or_insert(seed.into());
            for t in &mut graph.tasks {
                t.params.entry("seed").or_insert(seed.into());
            }
        }
        let dir = self.engagement_dir(&id);
        std::fs::create_dir_all(dir.join("calls")).map_err(io(&dir))?;
        write_json(&dir.join("engagement.json"), &record)?;
        write_json(&dir.join("graph.json"), &graph)?;
        // Created engagements count as running until their first execute
        // finishes, so early subscribers wait instead of closing.
        self.event_log(&id)?.set_running(true);
        Ok((record, graph))
    }

    /// Engagement ids in creation order.
    pub fn engagement_ids(&self) -> Result<Vec<String>, PodError> {
        let dir = self.config.home.join("engagements");
        let mut ids: Vec<String> = std::fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("engagement.json").is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn engagement(&self, id: &str) -> Result<EngagementSnapshot, PodError> {
        let dir = self.engagement_dir(id);
        if !dir.join("engagement.json").is_file() {
            return Err(PodError::UnknownEngagement(id.into()));
        }
        let running = self
            .logs
            .lock()
            .expect("log map poisoned")
            .get(id)
            .is_some_and(|l| l.is_running());
        Ok(EngagementSnapshot {
            record: read_json(&dir.join("engagement.json"))?,
            graph: read_json(&dir.join("graph.json"))?,
            running,
        })
    }

    /// The shared event log of an engagement; live subscribers of the same
    /// engagement see the same instance.
    pub fn event_log(&self, id: &str) -> Result<Arc<EventLog>, PodError> {
        let dir = self.engagement_dir(id);
        if !dir.join("engagement.json").is_file() {
            return Err(PodError::UnknownEngagement(id.into()));
        }
        let mut logs = self.logs.lock().expect("log map poisoned");
        if let Some(l) = logs.get(id) {
            return Ok(Arc::clone(l));
        }
        let path = dir.join("events.log");
        let log = Arc::new(EventLog::open(id, &path).map_err(io(&path))?);
        logs.insert(id.to_string(), Arc::clone(&log));
        Ok(log)
    }

    fn dispatch(
        &self,
        id: &str,
        options: &RunOptions,
        resume: bool,
    ) -> Result<EngagementResult, PodError> {
        let dir = self.engagement_dir(id);
        let mut graph: TaskGraph = self.engagement(id)?.graph;
        let log = self.event_log(id)?;
        let registry = self.registry();
        let config = DispatchConfig {
            max_concurrency: self.config.concurrency,
            seed: self.config.seed,
            halt_after_phase: options.halt_after_phase,
            disabled_skills: options.disabled_skills.clone(),
            calls_dir: Some(dir.join("calls")),
        };
        let graph_path = dir.join("graph.json");
        let mut d = Dispatcher::new(&registry, &self.builtins, &self.store, &self.env)
            .with_provider(Arc::clone(&self.provider))
            .with_config(config)
            .with_checkpoint(move |g: &TaskGraph| {
                if let Err(e) = write_json(&graph_path, g) {
                    tracing::error!("checkpoint failed: {e}");
                }
            });
        if let Some(p) = &options.probe {
            d = d.with_probe(Arc::clone(p));
        }
        let result = if resume {
            d.resume(&mut graph, &log)
        } else {
            d.execute(&mut graph, &log)
        };
        log.set_running(false);
        let result = result?;
        write_json(&dir.join("graph.json"), &graph)?;
        Ok(result)
    }

    /// Runs every pending task of a created engagement.
    pub fn execute(&self, id: &str, options: &RunOptions) -> Result<EngagementResult, PodError> {
        self.dispatch(id, options, false)
    }

    /// Re-attempts an engagement; done tasks are never re-run.
    /// Callers serving concurrent clients check [`EngagementSnapshot::running`] first.
    pub fn resume(&self, id: &str, options: &RunOptions) -> Result<EngagementResult, PodError> {
        self.dispatch(id, options, true)
    }

    /// Create then execute.
    pub fn run(
        &self,
        request: &EngagementRequest,
        options: &RunOptions,
    ) -> Result<(EngagementRecord, EngagementResult), PodError> {
        let (record, _) = self.create_engagement(request)?;
        let result = self.execute(&record.id, options)?;
        Ok((record, result))
    }

    /// The memo an engagement produced, if it got that far.
    pub fn memo_of(&self, result: &EngagementResult) -> Option<ArtifactId> {
        result
            .outputs
            .values()
            .flatten()
            .find(|id| self.store.get(id).is_some_and(|a| a.category == "memo"))
            .cloned()
    }

    pub fn research_graph(&self) -> ResearchGraph {
        ResearchGraph::rebuild(&self.store)
    }

    pub fn artifact(&self, id: &str) -> Result<ArtifactView, PodError> {
        let aid = ArtifactId::new(id);
        let artifact = self
            .store
            .get(&aid)
            .ok_or_else(|| PodError::UnknownArtifact(id.into()))?;
        Ok(ArtifactView {
            artifact: (*artifact).clone(),
            lineage: provenance_trail(&self.store, &aid)?,
        })
    }

    pub fn memo(&self, id: &str) -> Result<MemoView, PodError> {
        let aid = ArtifactId::new(id);
        let a = self
            .store
            .get(&aid)
            .ok_or_else(|| PodError::UnknownArtifact(id.into()))?;
        if a.category != "memo" {
            return Err(PodError::NotAMemo(id.into()));
        }
        let memo = MemoDocument::parse(&a.payload)
            .map_err(|e| PodError::NotAMemo(format!("{id}: {e}")))?;
        let citations = memo
            .inline_citations()
            .into_iter()
            .map(|cid| match self.store.get(&cid) {
                Some(c) => ResolvedCitation {
                    id: cid,
                    category: c.category.to_string(),
                    producer: c.producer_skill.clone(),
                    excerpt: excerpt(&c.payload),
                },
                None => ResolvedCitation {
                    id: cid,
                    category: "unresolved".into(),
                    producer: String::new(),
                    excerpt: String::new(),
                },
            })
            .collect();
        Ok(MemoView {
            id: aid,
            memo,
            citations,
        })
    }

    pub fn skill_groups(&self) -> Vec<SkillGroup> {
        let registry = self.registry();
        let mut groups: BTreeMap<(Phase, RunnerKind), Vec<SkillEntry>> = BTreeMap::new();
        for s in registry.skills() {
            groups
                .entry((s.phase, s.runner))
                .or_default()
                .push(SkillEntry {
                    id: s.id.clone(),
                    name: s.name.clone(),
                    phase: s.phase,
                    runner: s.runner,
                    needs: s.needs.iter().map(ToString::to_string).collect(),
                    produces: s.produces.iter().map(ToString::to_string).collect(),
                    owner_persona: s.owner_persona.clone(),
                });
        }
        groups
            .into_iter()
            .map(|((phase, runner), skills)| SkillGroup {
                phase,
                ui_phase: phase.ui_label().to_string(),
                runner,
                skills,
            })
            .collect()
    }

    pub fn personas(&self) -> Vec<PersonaPack> {
        self.registry().personas().cloned().collect()
    }

    pub fn workflows(&self) -> Vec<WorkflowEntry> {
        let registry = self.registry();
        self.catalog
            .iter()
            .map(|t| WorkflowEntry {
                id: t.id.clone(),
                engagement_type: t.engagement_type.clone(),
                compose_skill: t.compose_skill.clone(),
                required_phases: t.required_phases.clone(),
                required_sections: t.required_sections(),
                description: t.description.clone(),
                personas: registry
                    .personas()
                    .filter(|p| p.workflows.iter().any(|w| w.template_id == t.id))
                    .map(|p| p.id.clone())
                    .collect(),
            })
            .collect()
    }

    pub fn data_sources(&self) -> Vec<DataSource> {
        let tickers = self.env.fixture_tickers();
        self.registry()
            .skills()
            .filter(|s| s.phase == Phase::Ingest)
            .map(|s| {
                let mut modes = vec!["fixture".to_string()];
                if s.produces_category("filings") {
                    modes.push("live".into());
                }
                DataSource {
                    skill: s.id.clone(),
                    produces: s.produces.iter().map(ToString::to_string).collect(),
                    modes,
                    fixture_tickers: tickers.clone(),
                }
            })
            .collect()
    }

    fn install_pack(&self, manifest: PackManifest) -> Result<PersonaPack, PodError> {
        let mut guard = self.registry.write().expect("registry lock poisoned");
        let mut next = (**guard).clone();
        let (pack, _) = next.onboard_persona_pack(manifest.clone())?;
        let dir = self.config.home.join("packs").join(&pack.id);
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        write_json(&dir.join("pack.json"), &manifest)?;
        *guard = Arc::new(next);
        Ok(pack)
    }

    /// Onboards a pack directory and keeps a copy in the pod home.
    pub fn onboard_dir(&self, dir: &Path) -> Result<PersonaPack, PodError> {
        self.install_pack(load_pack_dir(dir)?)
    }

    pub fn onboard_manifest(&self, manifest: PackManifest) -> Result<PersonaPack, PodError> {
        self.install_pack(manifest)
    }

    /// Runs the distillation chain over a corpus directory and writes the
    /// resulting pack to `out`. The pack is not onboarded.
    pub fn distill(&self, corpus_dir: &Path, out: &Path) -> Result<DistillRun, PodError> {
        let (corpus, bundle) = SourceCorpus::load_dir(corpus_dir)?;
        let bundle = bundle.ok_or_else(|| {
            PodError::Config(format!(
                "{}: manifest.json has no persona block",
                corpus_dir.display()
            ))
        })?;
        let calls = self.config.home.join("distill").join(&bundle.id);
        std::fs::create_dir_all(&calls).map_err(io(&calls))?;
        let run = Distiller::new(
            &self.store,
            &self.catalog,
            &format!("distill-{}", bundle.id),
        )
        .with_seed(self.config.seed)
        .with_calls_log(calls.join("calls.jsonl"))
        .run(
            &corpus,
            &bundle,
            Arc::clone(&self.provider),
            &GenerateOptions::default(),
        )?;
        export_pack(&run.manifest, out)?;
        Ok(run)
    }

    /// Creates an engagement unless `key` was already used. A replayed key
    /// returns the original engagement (`false` = not fresh); a key reused
    /// for a different request is a conflict.
    pub fn create_idempotent(
        &self,
        key: &str,
        request: &EngagementRequest,
    ) -> Result<(EngagementRecord, TaskGraph, bool), PodError> {
        let _guard = self
            .idempotency_lock
            .lock()
            .expect("idempotency lock poisoned");
        let path = self.config.home.join("idempotency.json");
        let mut map: BTreeMap<String, (String, EngagementRequest)> = if path.is_file() {
            read_json(&path)?
        } else {
            BTreeMap::new()
        };
        if let Some((id, original)) = map.get(key) {
            if original != request {
                return Err(PodError::IdempotencyConflict {
                    key: key.into(),
                    engagement_id: id.clone(),
                });
            }
            let snap = self.engagement(id)?;
            return Ok((snap.record, snap.graph, false));
        }
        let (record, graph) = self.create_engagement(request)?;
        map.insert(key.into(), (record.id.clone(), request.clone()));
        write_json(&path, &map)?;
        Ok((record, graph, true))
    }
}

fn excerpt(payload: &str) -> String {
    let flat: String = payload.split_whitespace().collect::<Vec<_>>().join(" ");
    match flat.char_indices().nth(160) {
        Some((i, _)) => format!("{}...", &flat[..i]),
        None => flat,
    }
}
