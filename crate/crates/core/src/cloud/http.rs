//! HTTP JSON API under `/api/v1`.

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::oneshot;

use crate::protocol::TelemetryMessage;

use super::model::{AlarmAction, AlarmState};
use super::service::CloudService;
use super::CloudError;

pub type SharedService = Arc<Mutex<CloudService>>;

/// Overrides the service receive time; used by simulated-time clients.
pub const RECEIVE_TS_HEADER: &str = "x-receive-ts";

pub fn shared(svc: CloudService) -> SharedService {
    Arc::new(Mutex::new(svc))
}

pub fn wall_clock_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn receive_ts(headers: &HeaderMap) -> u64 {
    headers
        .get(RECEIVE_TS_HEADER)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(wall_clock_ms)
}

pub struct ApiError(StatusCode, String);

impl From<CloudError> for ApiError {
    fn from(e: CloudError) -> Self {
        let status = match e {
            CloudError::UnknownSpace(_) | CloudError::UnknownAlarm(_) => StatusCode::NOT_FOUND,
            CloudError::IllegalTransition { .. } | CloudError::OrderClosed(_) => StatusCode::CONFLICT,
            CloudError::Schema(_) | CloudError::WrongType { .. } | CloudError::TerminalMismatch { .. } => {
                StatusCode::BAD_REQUEST
            }
            CloudError::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn lock(svc: &SharedService) -> std::sync::MutexGuard<'_, CloudService> {
    svc.lock().unwrap_or_else(|p| p.into_inner())
}

fn submit(svc: &SharedService, headers: &HeaderMap, body: &[u8], heartbeat: bool) -> ApiResult {
    let now = receive_ts(headers);
    let mut guard = lock(svc);
    let parsed = serde_json::from_slice::<Value>(body)
        .map_err(|e| CloudError::Schema(crate::protocol::SchemaError(e.to_string())))
        .and_then(|v| TelemetryMessage::from_value(&v).map_err(CloudError::from));
    let msg = match parsed {
        Ok(m) => m,
        Err(e) => {
            guard.count_rejected();
            return Err(e.into());
        }
    };
    let is_hb = msg.type_name() == "heartbeat";
    if is_hb != heartbeat {
        guard.count_rejected();
        let expected = if heartbeat { "heartbeat" } else { "report or alarm" };
        return Err(CloudError::WrongType { expected, got: msg.type_name() }.into());
    }
    let out = guard.submit(&msg, now)?;
    Ok(Json(json!({ "applied": out.applied, "effects": out.effects })))
}

async fn post_report(State(svc): State<SharedService>, headers: HeaderMap, body: Bytes) -> ApiResult {
    submit(&svc, &headers, &body, false)
}

async fn post_heartbeat(State(svc): State<SharedService>, headers: HeaderMap, body: Bytes) -> ApiResult {
    submit(&svc, &headers, &body, true)
}

async fn list_spaces(State(svc): State<SharedService>) -> ApiResult {
    Ok(Json(json!(lock(&svc).space_summaries())))
}

async fn get_space(State(svc): State<SharedService>, Path(id): Path<String>) -> ApiResult {
    let detail = lock(&svc).space_detail(&id).ok_or(CloudError::UnknownSpace(id))?;
    Ok(Json(json!(detail)))
}

#[derive(Deserialize)]
struct AlarmQuery {
    state: Option<AlarmState>,
}

async fn list_alarms(State(svc): State<SharedService>, Query(q): Query<AlarmQuery>) -> ApiResult {
    Ok(Json(json!(lock(&svc).alarms(q.state))))
}

#[derive(Deserialize)]
struct OperatorBody {
    operator: String,
}

fn transition(svc: &SharedService, headers: &HeaderMap, id: &str, action: AlarmAction, operator: &str) -> ApiResult {
    let now = receive_ts(headers);
    let alarm = lock(svc).alarm_transition(id, action, operator, now)?;
    Ok(Json(json!(alarm)))
}

async fn ack_alarm(
    State(svc): State<SharedService>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(body): Json<OperatorBody>,
) -> ApiResult {
    transition(&svc, &headers, &id, AlarmAction::Ack, &body.operator)
}

async fn resolve_alarm(
    State(svc): State<SharedService>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(body): Json<OperatorBody>,
) -> ApiResult {
    transition(&svc, &headers, &id, AlarmAction::Resolve, &body.operator)
}

#[derive(Deserialize)]
struct OrderQuery {
    space: Option<String>,
}

async fn list_orders(State(svc): State<SharedService>, Query(q): Query<OrderQuery>) -> ApiResult {
    Ok(Json(json!(lock(&svc).orders(q.space.as_deref()))))
}

async fn list_nodes(State(svc): State<SharedService>) -> ApiResult {
    Ok(Json(json!(lock(&svc).nodes())))
}

async fn metrics(State(svc): State<SharedService>) -> ApiResult {
    Ok(Json(json!(lock(&svc).metrics())))
}

async fn sweep(State(svc): State<SharedService>, headers: HeaderMap) -> ApiResult {
    let now = receive_ts(&headers);
    let effects = lock(&svc).sweep(now);
    Ok(Json(json!({ "effects": effects })))
}

pub fn router(svc: SharedService) -> Router {
    Router::new()
        .route("/api/v1/reports", post(post_report))
        .route("/api/v1/heartbeats", post(post_heartbeat))
        .route("/api/v1/spaces", get(list_spaces))
        .route("/api/v1/spaces/{id}", get(get_space))
        .route("/api/v1/alarms", get(list_alarms))
        .route("/api/v1/alarms/{id}/ack", post(ack_alarm))
        .route("/api/v1/alarms/{id}/resolve", post(resolve_alarm))
        .route("/api/v1/orders", get(list_orders))
        .route("/api/v1/nodes", get(list_nodes))
        .route("/api/v1/metrics", get(metrics))
        .route("/api/v1/sweep", post(sweep))
        .with_state(svc)
}

/// Serve until `shutdown` resolves. With `sweep_every`, a background task
/// sweeps on the wall clock.
pub async fn serve(
    listener: tokio::net::TcpListener,
    svc: SharedService,
    sweep_every: Option<Duration>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    let sweeper = sweep_every.map(|period| {
        let svc = svc.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                let effects = lock(&svc).sweep(wall_clock_ms());
                for e in effects {
                    log::info!("sweep: {e:?}");
                }
            }
        })
    });
    let result = axum::serve(listener, router(svc)).with_graceful_shutdown(shutdown).await;
    if let Some(task) = sweeper {
        task.abort();
    }
    result
}

/// Server on a background thread with its own runtime.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn start(svc: SharedService, addr: &str, sweep_every: Option<Duration>) -> io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new().name("cloud-http".into()).spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                serve(listener, svc, sweep_every, async {
                    let _ = rx.await;
                })
                .await
            })
        })?;
        Ok(ServerHandle { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> io::Result<()> {
        self.shutdown_inner()
    }

    fn shutdown_inner(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| io::Error::other("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown_inner();
    }
}
