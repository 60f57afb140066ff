//! HTTP front door. JSON bodies, SSE progress, loopback bind by default.
//!
//! Mutating routes: `POST /engagements`, `POST /engagements/:id/resume` and
//! `POST /personas`. Everything else is a read projection of the pod.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::category::Phase;
use crate::planner::{EngagementRequest, TaskStatus};
use crate::pod::{Pod, PodError, RunOptions};
use crate::registry::PackManifest;

pub const DEFAULT_ADDR: &str = "127.0.0.1:7878";
pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    tag: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, tag: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            tag: tag.into(),
            message: message.into(),
        }
    }
}

impl From<PodError> for ApiError {
    fn from(e: PodError) -> Self {
        let status = if e.is_not_found() {
            StatusCode::NOT_FOUND
        } else if e.is_client_error() {
            StatusCode::BAD_REQUEST
        } else if e.is_conflict() {
            StatusCode::CONFLICT
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        ApiError::new(status, e.tag(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"error": self.tag, "message": self.message})),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Body of `POST /engagements`. `engagement_type` defaults to the workflow's.
#[derive(Debug, Clone, Deserialize)]
pub struct CreateEngagement {
    #[serde(default)]
    pub engagement_type: Option<String>,
    pub ticker: String,
    pub persona_id: String,
    pub workflow_id: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub id: String,
    pub skill: String,
    pub phase: Phase,
    pub status: TaskStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub engagement_id: String,
    pub tasks: Vec<TaskSummary>,
}

fn to_request(pod: &Pod, body: CreateEngagement) -> ApiResult<EngagementRequest> {
    let mut req = match body.engagement_type {
        Some(t) if !t.trim().is_empty() => EngagementRequest::new(
            &t,
            &body.ticker.to_uppercase(),
            &body.persona_id,
            &body.workflow_id,
        ),
        _ => pod.request(&body.ticker, &body.persona_id, &body.workflow_id)?,
    };
    req.params = body.params;
    Ok(req)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f)
        .await
        .expect("blocking task panicked")
}

async fn create_engagement(
    State(pod): State<Arc<Pod>>,
    headers: HeaderMap,
    Json(body): Json<CreateEngagement>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let key = headers
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(String::from);
    let request = to_request(&pod, body)?;
    let p = Arc::clone(&pod);
    blocking(move || {
        let (record, graph, fresh) = match &key {
            Some(k) => p.create_idempotent(k, &request)?,
            None => {
                let (r, g) = p.create_engagement(&request)?;
                (r, g, true)
            }
        };
        if fresh {
            let runner = Arc::clone(&p);
            let id = record.id.clone();
            std::thread::spawn(move || {
                if let Err(e) = runner.execute(&id, &RunOptions::default()) {
                    tracing::error!("engagement {id} failed: {e}");
                }
            });
        }
        Ok((StatusCode::ACCEPTED, Json(summary(&record.id, &graph))))
    })
    .await
}

fn summary(id: &str, graph: &crate::planner::TaskGraph) -> Created {
    Created {
        engagement_id: id.to_string(),
        tasks: graph
            .tasks
            .iter()
            .map(|t| TaskSummary {
                id: t.id.clone(),
                skill: t.skill.clone(),
                phase: t.phase,
                status: t.status,
            })
            .collect(),
    }
}

async fn list_engagements(State(pod): State<Arc<Pod>>) -> ApiResult<Json<Value>> {
    blocking(move || {
        let mut rows = Vec::new();
        for id in pod.engagement_ids()? {
            let snap = pod.engagement(&id)?;
            rows.push(json!({
                "id": id,
                "request": snap.record.request,
                "running": snap.running,
                "tasks": summary(&id, &snap.graph).tasks,
            }));
        }
        Ok(Json(Value::Array(rows)))
    })
    .await
}

async fn get_engagement(
    State(pod): State<Arc<Pod>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    blocking(move || {
        let snap = pod.engagement(&id)?;
        Ok(Json(
            serde_json::to_value(snap).expect("snapshot serializes"),
        ))
    })
    .await
}

async fn resume_engagement(
    State(pod): State<Arc<Pod>>,
    Path(id): Path<String>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    blocking(move || {
        let snap = pod.engagement(&id)?;
        if snap.running {
            return Err(PodError::Running(id).into());
        }
        pod.event_log(&id)?.set_running(true);
        let runner = Arc::clone(&pod);
        let rid = id.clone();
        std::thread::spawn(move || {
            if let Err(e) = runner.resume(&rid, &RunOptions::default()) {
                tracing::error!("resume of {rid} failed: {e}");
            }
        });
        Ok((StatusCode::ACCEPTED, Json(summary(&id, &snap.graph))))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    after: Option<u64>,
}

async fn stream_events(
    State(pod): State<Arc<Pod>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<EventsQuery>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let after = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .or(q.after)
        .unwrap_or(0);
    let log = {
        let pod = Arc::clone(&pod);
        blocking(move || pod.event_log(&id)).await?
    };
    let (tx, rx) = tokio::sync::mpsc::channel::<Event>(64);
    tokio::task::spawn_blocking(move || {
        for e in log.subscribe_after(after) {
            let ev = Event::default()
                .event(e.event.as_str())
                .id(e.sequence_no.to_string())
                .data(e.to_line());
            if tx.blocking_send(ev).is_err() {
                break;
            }
        }
    });
    let stream =
        futures::stream::unfold(
            rx,
            |mut rx| async move { rx.recv().await.map(|e| (Ok(e), rx)) },
        );
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

async fn list_skills(State(pod): State<Arc<Pod>>) -> Json<Value> {
    Json(serde_json::to_value(pod.skill_groups()).expect("skills serialize"))
}

async fn list_personas(State(pod): State<Arc<Pod>>) -> Json<Value> {
    Json(serde_json::to_value(pod.personas()).expect("personas serialize"))
}

async fn onboard_persona(
    State(pod): State<Arc<Pod>>,
    Json(manifest): Json<PackManifest>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    blocking(move || {
        let pack = pod.onboard_manifest(manifest)?;
        Ok((
            StatusCode::CREATED,
            Json(serde_json::to_value(pack).expect("pack serializes")),
        ))
    })
    .await
}

async fn list_workflows(State(pod): State<Arc<Pod>>) -> Json<Value> {
    Json(serde_json::to_value(pod.workflows()).expect("workflows serialize"))
}

async fn list_data_sources(State(pod): State<Arc<Pod>>) -> Json<Value> {
    Json(serde_json::to_value(pod.data_sources()).expect("sources serialize"))
}

async fn get_graph(State(pod): State<Arc<Pod>>) -> Response {
    let body = blocking(move || pod.research_graph().export()).await;
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn gap_report(State(pod): State<Arc<Pod>>) -> Json<Value> {
    let rows = blocking(move || pod.research_graph().gap_report()).await;
    Json(serde_json::to_value(rows).expect("gaps serialize"))
}

async fn theme_view(
    State(pod): State<Arc<Pod>>,
    Path(key): Path<String>,
) -> ApiResult<Json<Value>> {
    blocking(move || {
        let view = pod
            .research_graph()
            .theme_view(&key)
            .map_err(PodError::from)?;
        Ok(Json(serde_json::to_value(view).expect("theme serializes")))
    })
    .await
}

async fn compare_views(
    State(pod): State<Arc<Pod>>,
    Path(ticker): Path<String>,
) -> ApiResult<Json<Value>> {
    blocking(move || {
        let rows = pod
            .research_graph()
            .compare_views(&ticker.to_uppercase())
            .map_err(PodError::from)?;
        Ok(Json(serde_json::to_value(rows).expect("rows serialize")))
    })
    .await
}

async fn get_artifact(
    State(pod): State<Arc<Pod>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    blocking(move || {
        let view = pod.artifact(&id)?;
        let mut body = serde_json::to_value(&view).expect("artifact serializes");
        if view.artifact.category == "memo" {
            if let Ok(m) = pod.memo(&id) {
                body["memo"] = serde_json::to_value(m.memo).expect("memo serializes");
            }
        }
        Ok(Json(body))
    })
    .await
}

async fn get_memo(State(pod): State<Arc<Pod>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    blocking(move || {
        Ok(Json(
            serde_json::to_value(pod.memo(&id)?).expect("memo serializes"),
        ))
    })
    .await
}

pub fn router(pod: Arc<Pod>) -> Router {
    Router::new()
        .route(
            "/engagements",
            post(create_engagement).get(list_engagements),
        )
        .route("/engagements/:id", get(get_engagement))
        .route("/engagements/:id/events", get(stream_events))
        .route("/engagements/:id/resume", post(resume_engagement))
        .route("/skills", get(list_skills))
        .route("/personas", get(list_personas).post(onboard_persona))
        .route("/workflows", get(list_workflows))
        .route("/data-sources", get(list_data_sources))
        .route("/graph", get(get_graph))
        .route("/graph/gaps", get(gap_report))
        .route("/graph/themes/:key", get(theme_view))
        .route("/graph/tickers/:ticker/compare", get(compare_views))
        .route("/artifacts/:id", get(get_artifact))
        .route("/memos/:id", get(get_memo))
        .with_state(pod)
}

/// Serves until the process is stopped. `on_bound` receives the actual
/// address, which matters when binding port 0.
pub async fn serve(
    pod: Arc<Pod>,
    addr: SocketAddr,
    on_bound: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(pod)).await
}
