//! Command-line front end. Every command is a thin wrapper over the pod; the
//! request format is the one the API uses.
//!
//! Exit codes: 0 success, 1 internal failure, 2 usage, 3 not found,
//! 4 rejected input, 5 conflict, 6 engagement aborted, 7 integrity findings.
//! Failures print one `error: <kind>: <message>` line on stderr, or a JSON
//! object with `--json`.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::dispatcher::{EventKind, Outcome, TaskEvent};
use crate::graph::seed_memo_fixture;
use crate::pod::{default_assets_dir, Pod, PodConfig, PodError, ProviderSettings, RunOptions};
use crate::store::verify_dir;

#[derive(Debug, Parser)]
#[command(name = "pod", version, about = "Multi-persona equity research engine")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Pod home: store, engagements, onboarded packs.
    #[arg(long, env = "POD_HOME", default_value = ".pod", global = true)]
    pub home: PathBuf,
    /// Fixture root with one directory per ticker.
    #[arg(long, env = "POD_FIXTURES", global = true)]
    pub fixtures: Option<PathBuf>,
    #[arg(long, env = "POD_SEED", global = true)]
    pub seed: Option<u64>,
    #[arg(long, env = "POD_CONCURRENCY", global = true)]
    pub concurrency: Option<usize>,
    /// Structured output for scripting.
    #[arg(long, global = true)]
    pub json: bool,
    /// Logical timestamps, for replays that must match bit for bit.
    #[arg(long, env = "POD_LOGICAL_CLOCK", global = true)]
    pub logical_clock: bool,
    #[arg(
        long,
        env = "POD_PROVIDER",
        value_enum,
        default_value = "stub",
        global = true
    )]
    pub provider: ProviderKind,
    /// OpenAI-compatible chat completions URL.
    #[arg(long, env = "POD_PROVIDER_ENDPOINT", global = true)]
    pub provider_endpoint: Option<String>,
    #[arg(long, env = "POD_PROVIDER_MODEL", global = true)]
    pub provider_model: Option<String>,
    #[arg(
        long,
        env = "POD_PROVIDER_API_KEY",
        hide_env_values = true,
        global = true
    )]
    pub provider_api_key: Option<String>,
    /// Contact string SEC EDGAR requires; enables live filings.
    #[arg(long, env = "POD_EDGAR_USER_AGENT", global = true)]
    pub edgar_user_agent: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Stub,
    Http,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create and execute an engagement.
    Run {
        #[arg(long)]
        ticker: String,
        #[arg(long)]
        persona: String,
        #[arg(long)]
        workflow: String,
        /// Print every event as it happens.
        #[arg(long)]
        follow: bool,
        /// Fetch filings from EDGAR instead of fixtures.
        #[arg(long)]
        live: bool,
        /// Extra request parameter, `key=value`.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, String)>,
    },
    /// Re-attempt an engagement; finished tasks are kept.
    Resume { engagement_id: String },
    Skills {
        #[command(subcommand)]
        action: ListAction,
    },
    Personas {
        #[command(subcommand)]
        action: ListAction,
    },
    Workflows {
        #[command(subcommand)]
        action: ListAction,
    },
    Data {
        #[command(subcommand)]
        action: ListAction,
    },
    Persona {
        #[command(subcommand)]
        action: PersonaAction,
    },
    Graph {
        #[command(subcommand)]
        action: GraphAction,
    },
    Store {
        #[command(subcommand)]
        action: StoreAction,
    },
    Memo {
        #[command(subcommand)]
        action: MemoAction,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "POD_ADDR", default_value = crate::api::DEFAULT_ADDR)]
        addr: std::net::SocketAddr,
    },
}

#[derive(Debug, Subcommand)]
pub enum ListAction {
    List,
}

#[derive(Debug, Subcommand)]
pub enum PersonaAction {
    /// Corpus to pack: extract, generate, specify, bundle.
    Distill {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also onboard the resulting pack.
        #[arg(long)]
        onboard: bool,
    },
    /// Validate and register an external pack directory.
    Onboard { pack_dir: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum GraphAction {
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Gaps,
    Theme {
        key: String,
    },
    Compare {
        ticker: String,
    },
    /// Append hand-written memos (front-matter Markdown) to the store.
    Seed {
        dir: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum StoreAction {
    Verify,
}

#[derive(Debug, Subcommand)]
pub enum MemoAction {
    Show {
        id: String,
        #[arg(long)]
        with_sources: bool,
    },
}

fn parse_param(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got `{s}`"))
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: String,
    pub message: String,
}

impl CliError {
    fn new(code: u8, kind: &str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind: kind.into(),
            message: message.into(),
        }
    }
}

impl From<PodError> for CliError {
    fn from(e: PodError) -> Self {
        let code = if e.is_not_found() {
            3
        } else if e.is_client_error() {
            4
        } else if e.is_conflict() {
            5
        } else {
            1
        };
        let text = e.to_string();
        let message = text
            .strip_prefix(&format!("{}: ", e.tag()))
            .unwrap_or(&text)
            .to_string();
        CliError::new(code, e.tag(), message)
    }
}

type CliResult = Result<(), CliError>;

/// Output sink; tests capture it instead of stdout.
pub struct Out<'a> {
    json: bool,
    w: &'a mut dyn Write,
}

impl Out<'_> {
    fn line(&mut self, s: impl AsRef<str>) {
        let _ = writeln!(self.w, "{}", s.as_ref());
    }

    fn value(&mut self, v: &Value) {
        let _ = writeln!(
            self.w,
            "{}",
            serde_json::to_string_pretty(v).expect("value serializes")
        );
    }

    fn table(&mut self, headers: &[&str], rows: Vec<Vec<String>>) {
        let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
        for r in &rows {
            for (i, c) in r.iter().enumerate() {
                widths[i] = widths[i].max(c.chars().count());
            }
        }
        let fmt = |cells: Vec<String>| {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{c:<w$}", w = widths[i]))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        self.line(fmt(headers.iter().map(|h| h.to_string()).collect()));
        for r in rows {
            self.line(fmt(r));
        }
    }
}

fn pod_config(g: &Global) -> Result<PodConfig, CliError> {
    let mut c = PodConfig::new(&g.home)
        .seed(g.seed)
        .logical_clock(g.logical_clock);
    if let Some(f) = &g.fixtures {
        c = c.fixtures(f);
    }
    if let Some(n) = g.concurrency {
        c.concurrency = n.max(1);
    }
    c.edgar_user_agent = g.edgar_user_agent.clone();
    c.provider = match g.provider {
        ProviderKind::Stub => ProviderSettings::Stub,
        ProviderKind::Http => ProviderSettings::Http {
            endpoint: g.provider_endpoint.clone().ok_or_else(|| {
                CliError::new(2, "config", "--provider http needs --provider-endpoint")
            })?,
            api_key: g.provider_api_key.clone(),
            model: g.provider_model.clone().unwrap_or_else(|| "default".into()),
        },
    };
    Ok(c)
}

fn open(g: &Global) -> Result<Pod, CliError> {
    Ok(Pod::open(pod_config(g)?)?)
}

fn event_line(e: &TaskEvent) -> String {
    let mut s = format!(
        "{:>3} {:<18} {}",
        e.sequence_no,
        e.event.as_str(),
        e.task_id.as_deref().unwrap_or("-")
    );
    if let Some(d) = &e.detail {
        s.push_str(&format!("  ({d})"));
    }
    s
}

fn run(g: &Global, out: &mut Out<'_>, cmd: &Command) -> CliResult {
    let Command::Run {
        ticker,
        persona,
        workflow,
        follow,
        live,
        params,
    } = cmd
    else {
        unreachable!()
    };
    let pod = Arc::new(open(g)?);
    let mut request = pod.request(ticker, persona, workflow)?;
    if *live {
        request.params.insert("source_mode".into(), "live".into());
    }
    for (k, v) in params {
        request.params.insert(k.clone(), v.clone().into());
    }
    let (record, _) = pod.create_engagement(&request)?;
    if !out.json {
        out.line(format!("engagement {}", record.id));
    }
    let log = pod.event_log(&record.id)?;
    let worker = {
        let pod = Arc::clone(&pod);
        let id = record.id.clone();
        std::thread::spawn(move || pod.execute(&id, &RunOptions::default()))
    };
    let mut events = Vec::new();
    for e in log.subscribe() {
        if !out.json && (*follow || e.event.is_task_terminal()) {
            out.line(event_line(&e));
        }
        events.push(e);
    }
    let result = worker.join().expect("engagement worker panicked")?;
    let memo = pod.memo_of(&result);
    if out.json {
        out.value(&json!({
            "engagement_id": record.id,
            "outcome": result.outcome,
            "statuses": result.statuses,
            "memo": memo,
            "events": events,
        }));
    } else if let Some(m) = &memo {
        out.line(format!("memo {m}"));
    }
    finish(&result.outcome, &events)
}

fn finish(outcome: &Outcome, events: &[TaskEvent]) -> CliResult {
    match outcome {
        Outcome::Done | Outcome::Halted => Ok(()),
        Outcome::Aborted => {
            let detail = events
                .iter()
                .rev()
                .find(|e| e.event == EventKind::EngagementAborted)
                .and_then(|e| e.detail.clone())
                .unwrap_or_default();
            Err(CliError::new(6, "engagement-aborted", detail))
        }
    }
}

fn resume(g: &Global, out: &mut Out<'_>, id: &str) -> CliResult {
    let pod = open(g)?;
    let log = pod.event_log(id)?;
    let before = log.last_sequence();
    let result = pod.resume(id, &RunOptions::default())?;
    let events: Vec<TaskEvent> = log
        .events()
        .into_iter()
        .filter(|e| e.sequence_no > before)
        .collect();
    if out.json {
        out.value(&json!({"engagement_id": id, "outcome": result.outcome, "statuses": result.statuses, "events": events}));
    } else {
        for e in events.iter().filter(|e| e.event.is_task_terminal()) {
            out.line(event_line(e));
        }
        if let Some(m) = pod.memo_of(&result) {
            out.line(format!("memo {m}"));
        }
    }
    finish(&result.outcome, &events)
}

fn listings(g: &Global, out: &mut Out<'_>, cmd: &Command) -> CliResult {
    let pod = open(g)?;
    match cmd {
        Command::Skills { .. } => {
            let groups = pod.skill_groups();
            if out.json {
                return {
                    out.value(&serde_json::to_value(groups).expect("serializes"));
                    Ok(())
                };
            }
            let rows = groups
                .iter()
                .flat_map(|grp| grp.skills.iter())
                .map(|s| {
                    vec![
                        s.phase.as_str().to_string(),
                        s.runner.as_str().to_string(),
                        s.id.clone(),
                        s.needs.join(","),
                        s.produces.join(","),
                        s.owner_persona.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            out.table(
                &["PHASE", "RUNNER", "SKILL", "NEEDS", "PRODUCES", "OWNER"],
                rows,
            );
        }
        Command::Personas { .. } => {
            let personas = pod.personas();
            if out.json {
                return {
                    out.value(&serde_json::to_value(personas).expect("serializes"));
                    Ok(())
                };
            }
            let rows = personas
                .iter()
                .map(|p| {
                    vec![
                        p.id.clone(),
                        p.name.clone(),
                        p.title.clone(),
                        p.default_template.clone(),
                        p.workflows
                            .iter()
                            .map(|w| w.template_id.as_str())
                            .collect::<Vec<_>>()
                            .join(","),
                    ]
                })
                .collect();
            out.table(&["ID", "NAME", "TITLE", "DEFAULT", "WORKFLOWS"], rows);
        }
        Command::Workflows { .. } => {
            let wfs = pod.workflows();
            if out.json {
                return {
                    out.value(&serde_json::to_value(wfs).expect("serializes"));
                    Ok(())
                };
            }
            let rows = wfs
                .iter()
                .map(|w| {
                    vec![
                        w.id.clone(),
                        w.engagement_type.clone(),
                        w.compose_skill.clone(),
                        w.required_sections.join(", "),
                    ]
                })
                .collect();
            out.table(&["ID", "TYPE", "COMPOSE", "SECTIONS"], rows);
        }
        Command::Data { .. } => {
            let sources = pod.data_sources();
            if out.json {
                return {
                    out.value(&serde_json::to_value(sources).expect("serializes"));
                    Ok(())
                };
            }
            let rows = sources
                .iter()
                .map(|d| {
                    vec![
                        d.skill.clone(),
                        d.produces.join(","),
                        d.modes.join(","),
                        d.fixture_tickers.join(","),
                    ]
                })
                .collect();
            out.table(&["SKILL", "PRODUCES", "MODES", "FIXTURES"], rows);
        }
        _ => unreachable!(),
    }
    Ok(())
}

fn persona(g: &Global, out: &mut Out<'_>, action: &PersonaAction) -> CliResult {
    let pod = open(g)?;
    match action {
        PersonaAction::Distill {
            corpus,
            out: dir,
            onboard,
        } => {
            let run = pod.distill(corpus, dir)?;
            let pack = if *onboard {
                Some(pod.onboard_dir(dir)?)
            } else {
                None
            };
            if out.json {
                out.value(&json!({
                    "pack_dir": dir,
                    "persona_id": run.manifest.id,
                    "skill": run.spec.as_str(),
                    "provider_calls": run.provider_calls,
                    "artifacts": {
                        "source_corpus": run.corpus,
                        "structured_material": run.material,
                        "persona_document": run.persona,
                        "skill_spec": run.spec,
                        "persona_pack": run.pack,
                    },
                    "onboarded": pack.is_some(),
                }));
            } else {
                out.line(format!("persona {} -> {}", run.manifest.id, dir.display()));
                out.line(format!("provider calls {}", run.provider_calls));
                out.line(format!("pack artifact {}", run.pack));
                if pack.is_some() {
                    out.line("onboarded");
                }
            }
        }
        PersonaAction::Onboard { pack_dir } => {
            let pack = pod.onboard_dir(pack_dir)?;
            if out.json {
                out.value(&serde_json::to_value(&pack).expect("serializes"));
            } else {
                out.line(format!(
                    "onboarded {} ({}, {})",
                    pack.id, pack.name, pack.title
                ));
                out.line(format!("skills {}", pack.skills.join(", ")));
                for w in &pack.workflows {
                    out.line(format!("workflow {}  {}", w.template_id, w.name));
                }
            }
        }
    }
    Ok(())
}

fn graph(g: &Global, out: &mut Out<'_>, action: &GraphAction) -> CliResult {
    let pod = open(g)?;
    if let GraphAction::Seed { dir } = action {
        let dir = dir
            .clone()
            .unwrap_or_else(|| default_assets_dir().join("graph-fixture"));
        let ids = seed_memo_fixture(pod.store(), &dir)
            .map_err(|e| CliError::new(4, "bad-fixture", e.to_string()))?;
        if out.json {
            out.value(&serde_json::to_value(&ids).expect("serializes"));
        } else {
            for (label, id) in ids {
                out.line(format!("{label} {id}"));
            }
        }
        return Ok(());
    }
    let kg = pod.research_graph();
    match action {
        GraphAction::Export { out: file } => {
            let text = kg.export();
            match file {
                Some(f) => {
                    std::fs::write(f, &text)
                        .map_err(|e| CliError::new(1, "io", format!("{}: {e}", f.display())))?;
                    if out.json {
                        out.value(
                            &json!({"out": f, "nodes": kg.nodes.len(), "edges": kg.edges.len()}),
                        );
                    } else {
                        out.line(format!(
                            "wrote {} ({} nodes, {} edges)",
                            f.display(),
                            kg.nodes.len(),
                            kg.edges.len()
                        ));
                    }
                }
                None => out.line(text),
            }
        }
        GraphAction::Gaps => {
            let rows = kg.gap_report();
            if out.json {
                out.value(&serde_json::to_value(rows).expect("serializes"));
            } else {
                for r in rows {
                    let who = if r.personas.is_empty() {
                        "no persona".to_string()
                    } else {
                        format!("only {}", r.personas.join(", "))
                    };
                    out.line(format!("{}  {who}", r.ticker));
                }
            }
        }
        GraphAction::Theme { key } => {
            let view = kg.theme_view(key).map_err(PodError::from)?;
            if out.json {
                out.value(&serde_json::to_value(view).expect("serializes"));
            } else {
                out.line(format!("theme {}", view.display));
                out.line(format!("tickers  {}", view.tickers.join(", ")));
                out.line(format!("analysts {}", view.analysts.join(", ")));
                out.line(format!("memos    {}", view.memos.join(", ")));
            }
        }
        GraphAction::Compare { ticker } => {
            let rows = kg
                .compare_views(&ticker.to_uppercase())
                .map_err(PodError::from)?;
            if out.json {
                out.value(&serde_json::to_value(rows).expect("serializes"));
            } else {
                let rows = rows
                    .into_iter()
                    .map(|r| {
                        vec![
                            r.persona,
                            r.verdict.unwrap_or_else(|| "-".into()),
                            r.workflow,
                            r.created_at.to_rfc3339(),
                            r.title,
                        ]
                    })
                    .collect();
                out.table(
                    &["PERSONA", "VERDICT", "WORKFLOW", "CREATED", "TITLE"],
                    rows,
                );
            }
        }
        GraphAction::Seed { .. } => unreachable!(),
    }
    Ok(())
}

fn store_verify(g: &Global, out: &mut Out<'_>) -> CliResult {
    let report = verify_dir(&g.home.join("store"));
    if out.json {
        out.value(&serde_json::to_value(&report).expect("serializes"));
    } else if report.is_ok() {
        out.line(format!(
            "OK, 0 findings ({} artifacts checked)",
            report.checked
        ));
    } else {
        for f in &report.findings {
            out.line(serde_json::to_string(f).expect("serializes"));
        }
    }
    if report.is_ok() {
        Ok(())
    } else {
        Err(CliError::new(
            7,
            "integrity-findings",
            format!(
                "{} finding(s) in {} artifacts",
                report.findings.len(),
                report.checked
            ),
        ))
    }
}

fn memo_show(g: &Global, out: &mut Out<'_>, id: &str, with_sources: bool) -> CliResult {
    let pod = open(g)?;
    let view = pod.memo(id)?;
    if out.json {
        let mut v = serde_json::to_value(&view).expect("serializes");
        if !with_sources {
            v.as_object_mut().expect("object").remove("citations");
        }
        out.value(&v);
        return Ok(());
    }
    out.line(view.memo.to_markdown().trim_end());
    if with_sources {
        out.line("");
        out.line("Resolved citations:");
        for c in &view.citations {
            out.line(format!(
                "[{}] {} ({}): {}",
                c.id.short(),
                c.category,
                c.producer,
                c.excerpt
            ));
        }
    }
    Ok(())
}

fn serve(g: &Global, out: &mut Out<'_>, addr: std::net::SocketAddr) -> CliResult {
    let pod = Arc::new(open(g)?);
    if !addr.ip().is_loopback() {
        tracing::warn!("binding {addr}: the service has no authentication");
    }
    let rt =
        tokio::runtime::Runtime::new().map_err(|e| CliError::new(1, "runtime", e.to_string()))?;
    let announce = |a| out.line(format!("listening on http://{a}"));
    rt.block_on(crate::api::serve(pod, addr, announce))
        .map_err(|e| CliError::new(1, "serve", e.to_string()))
}

/// Runs one parsed command, writing results to `w`.
pub fn execute(cli: &Cli, w: &mut dyn Write) -> CliResult {
    let g = &cli.global;
    let mut out = Out { json: g.json, w };
    match &cli.command {
        cmd @ Command::Run { .. } => run(g, &mut out, cmd),
        Command::Resume { engagement_id } => resume(g, &mut out, engagement_id),
        cmd @ (Command::Skills { .. }
        | Command::Personas { .. }
        | Command::Workflows { .. }
        | Command::Data { .. }) => listings(g, &mut out, cmd),
        Command::Persona { action } => persona(g, &mut out, action),
        Command::Graph { action } => graph(g, &mut out, action),
        Command::Store {
            action: StoreAction::Verify,
        } => store_verify(g, &mut out),
        Command::Memo {
            action: MemoAction::Show { id, with_sources },
        } => memo_show(g, &mut out, id, *with_sources),
        Command::Serve { addr } => serve(g, &mut out, *addr),
    }
}

/// Entry point for the `pod` binary.
pub fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("POD_LOG"))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json = cli.global.json;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json {
                eprintln!(
                    "{}",
                    json!({"error": e.kind, "message": e.message, "exit_code": e.code})
                );
            } else {
                eprintln!("error: {}: {}", e.kind, e.message);
            }
            ExitCode::from(e.code)
        }
    }
}
