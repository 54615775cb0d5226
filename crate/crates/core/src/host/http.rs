//! HTTP and WebSocket routes.

use std::sync::Arc;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{Host, HostError, LiveItem};
use crate::protocol::{AckStatus, BindingToken, CommandCode};
use crate::session::Regimen;
use crate::sim::{ScenarioField, SteeringCommand};

impl IntoResponse for HostError {
    fn into_response(self) -> Response {
        let status = match self {
            HostError::NotFound(_) => StatusCode::NOT_FOUND,
            HostError::Validation(_) | HostError::Parameter(_) => StatusCode::BAD_REQUEST,
            HostError::Rejected(_) => StatusCode::CONFLICT,
            HostError::DeviceUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            HostError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub id: String,
    pub token: BindingToken,
}

/// `{command, arg}` as sent by a live client. `command` is a controller
/// command (`start`, `pause`, `resume`, `stop`, `set_intensity`,
/// `request_status`) or a simulator field name such as `spo2_target`, in
/// which case `arg` is the new value in natural units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandRequest {
    pub command: String,
    #[serde(default)]
    pub arg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandResponse {
    pub command: String,
    pub status: String,
    pub ok: bool,
}

/// Maps a client command to its wire code and argument.
pub fn parse_command(req: &CommandRequest) -> Result<(u8, u16), HostError> {
    let plain = |code: CommandCode| Ok((code.code(), 0));
    match req.command.as_str() {
        "start" => plain(CommandCode::Start),
        "pause" => plain(CommandCode::Pause),
        "resume" => plain(CommandCode::Resume),
        "stop" => plain(CommandCode::Stop),
        "request_status" => plain(CommandCode::RequestStatus),
        "set_intensity" => {
            let level = req
                .arg
                .ok_or_else(|| HostError::Parameter("set_intensity needs arg".into()))?;
            if !(1.0..=5.0).contains(&level) || level.fract() != 0.0 {
                return Err(HostError::Parameter(format!("intensity level {level} outside 1..=5")));
            }
            Ok((CommandCode::SetIntensity.code(), level as u16))
        }
        other => {
            let field = ScenarioField::from_name(other)
                .ok_or_else(|| HostError::Parameter(format!("unknown command {other:?}")))?;
            let value = req
                .arg
                .ok_or_else(|| HostError::Parameter(format!("{other} needs arg")))?;
            let (code, arg) = SteeringCommand::new(field, value)
                .to_wire()
                .map_err(|e| HostError::Parameter(e.to_string()))?;
            Ok((code.code(), arg))
        }
    }
}

async fn run_command(host: &Host, id: &str, req: &CommandRequest) -> Result<CommandResponse, HostError> {
    let (code, arg) = parse_command(req)?;
    let status = host.submit_command(id, code, arg).await?;
    Ok(CommandResponse {
        command: req.command.clone(),
        status: status.name().to_string(),
        ok: status == AckStatus::Ok,
    })
}

#[derive(Debug, Deserialize)]
struct RangeQuery {
    from: Option<u64>,
    to: Option<u64>,
}

type Shared = State<Arc<Host>>;

async fn create(State(host): Shared, body: Option<Json<Regimen>>) -> Result<impl IntoResponse, HostError> {
    let regimen = body.map(|Json(r)| r).unwrap_or_default();
    let rec = host.create_session(regimen)?;
    Ok((
        StatusCode::CREATED,
        Json(CreatedSession {
            id: rec.id,
            token: rec.token,
        }),
    ))
}

async fn list(State(host): Shared) -> Result<impl IntoResponse, HostError> {
    Ok(Json(host.list_sessions()?))
}

async fn show(State(host): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, HostError> {
    Ok(Json(host.query_session(&id)?))
}

async fn events(State(host): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, HostError> {
    Ok(Json(host.events(&id)?))
}

async fn metrics(
    State(host): Shared,
    Path(id): Path<String>,
    Query(q): Query<RangeQuery>,
) -> Result<impl IntoResponse, HostError> {
    Ok(Json(host.query_metrics(&id, q.from, q.to)?))
}

async fn export(State(host): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, HostError> {
    let csv = host.export_csv(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv))
}

async fn report(State(host): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, HostError> {
    Ok(Json(host.clinician_report(&id)?))
}

async fn command(
    State(host): Shared,
    Path(id): Path<String>,
    Json(req): Json<CommandRequest>,
) -> Result<impl IntoResponse, HostError> {
    Ok(Json(run_command(&host, &id, &req).await?))
}

async fn live(State(host): Shared, Path(id): Path<String>, ws: WebSocketUpgrade) -> Result<Response, HostError> {
    let sub = host.subscribe(&id)?;
    Ok(ws.on_upgrade(move |socket| live_socket(host, id, sub, socket)))
}

async fn live_socket(host: Arc<Host>, id: String, mut sub: super::Subscription, mut socket: WebSocket) {
    loop {
        tokio::select! {
            item = sub.recv() => {
                let Some(item) = item else { break };
                let overflow = matches!(item, LiveItem::Overflow { .. });
                let Ok(text) = serde_json::to_string(&item) else { break };
                if socket.send(WsMessage::Text(text.into())).await.is_err() || overflow {
                    break;
                }
            }
            msg = socket.recv() => {
                let text = match msg {
                    Some(Ok(WsMessage::Text(t))) => t,
                    Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match serde_json::from_str::<CommandRequest>(&text) {
                    Ok(req) => match run_command(&host, &id, &req).await {
                        Ok(r) => serde_json::json!({ "ack": r }),
                        Err(e) => serde_json::json!({ "error": e.to_string(), "command": req.command }),
                    },
                    Err(e) => serde_json::json!({ "error": format!("bad command: {e}") }),
                };
                if socket.send(WsMessage::Text(reply.to_string().into())).await.is_err() {
                    break;
                }
            }
        }
    }
    let _ = socket.send(WsMessage::Close(None)).await;
}

pub fn router(host: Arc<Host>) -> Router {
    Router::new()
        .route("/api/sessions", post(create).get(list))
        .route("/api/sessions/{id}", get(show))
        .route("/api/sessions/{id}/events", get(events))
        .route("/api/sessions/{id}/metrics", get(metrics))
        .route("/api/sessions/{id}/export.csv", get(export))
        .route("/api/sessions/{id}/report", get(report))
        .route("/api/sessions/{id}/command", post(command))
        .route("/api/live/{id}", get(live))
        .with_state(host)
}
