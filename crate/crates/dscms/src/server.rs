//! The governance API the dashboard consumes: token-authenticated,
//! role-scoped endpoints over one serialized writer task, plus a
//! sequence-keyed event stream.

use std::collections::{BTreeMap, BTreeSet};
use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc, oneshot};

use dscms_core::argument::serialize_case;
use dscms_core::engine::{ImpactReport, RecoveryAction};
use dscms_core::governance::{Actor, GovernanceReport, Role};
use dscms_core::Timestamp;

use crate::ops::{self, IngestOutcome, OpError, RecoveryOutcome, RevalidationOutcome, SimulateOutcome};
use crate::workspace::{Workspace, WorkspaceState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Read,
    Ingest,
    Scenario,
    Recover,
    Revalidate,
}

#[derive(Debug, Clone, Deserialize)]
struct TokenEntry {
    token: String,
    role: Role,
}

#[derive(Debug, Clone, Deserialize)]
struct TokenFile {
    tokens: Vec<TokenEntry>,
    #[serde(default)]
    scopes: BTreeMap<Role, BTreeSet<Scope>>,
}

/// Static bearer-token role map with per-role endpoint scopes.
#[derive(Debug, Clone)]
pub struct AuthConfig {
    tokens: BTreeMap<String, Role>,
    scopes: BTreeMap<Role, BTreeSet<Scope>>,
}

impl AuthConfig {
    pub fn from_document(doc: &str) -> Result<Self, serde_json::Error> {
        let file: TokenFile = serde_json::from_str(doc)?;
        let mut scopes = default_scopes();
        for (role, set) in file.scopes {
            scopes.insert(role, set);
        }
        Ok(AuthConfig {
            tokens: file
                .tokens
                .into_iter()
                .map(|t| (t.token, t.role))
                .collect(),
            scopes,
        })
    }

    fn role_for(&self, token: &str) -> Option<Role> {
        self.tokens.get(token).copied()
    }

    fn allows(&self, role: Role, scope: Scope) -> bool {
        self.scopes
            .get(&role)
            .is_some_and(|set| set.contains(&scope))
    }
}

fn default_scopes() -> BTreeMap<Role, BTreeSet<Scope>> {
    use Scope::*;
    [
        (
            Role::ResponsibleScalingOfficer,
            [Read, Ingest, Scenario, Recover, Revalidate].into(),
        ),
        (
            Role::ExecutiveLeadership,
            [Read, Scenario, Recover, Revalidate].into(),
        ),
        (
            Role::SafetyTeam,
            [Read, Ingest, Scenario, Recover, Revalidate].into(),
        ),
        (Role::ExternalOversight, [Read].into()),
    ]
    .into()
}

/// One entry of the event stream, sequence-keyed so clients can resume.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub ts: Timestamp,
    pub kind: String,
    pub payload: serde_json::Value,
}

enum Command {
    GetCase(oneshot::Sender<String>),
    GetStatus(oneshot::Sender<serde_json::Value>),
    GetImpact(oneshot::Sender<Option<ImpactReport>>),
    GetReport(oneshot::Sender<GovernanceReport>),
    GetAudit(oneshot::Sender<String>),
    GetEvents {
        after: u64,
        reply: oneshot::Sender<Vec<EventRecord>>,
    },
    Ingest {
        text: String,
        actor: Actor,
        reply: oneshot::Sender<Result<IngestOutcome, OpError>>,
    },
    Scenario {
        name: String,
        actor: Actor,
        reply: oneshot::Sender<Result<SimulateOutcome, OpError>>,
    },
    Recover {
        actions: Vec<RecoveryAction>,
        cited_version: Option<u64>,
        actor: Actor,
        reply: oneshot::Sender<Result<RecoveryOutcome, OpError>>,
    },
    Revalidate {
        actor: Actor,
        reply: oneshot::Sender<Result<RevalidationOutcome, OpError>>,
    },
}

struct Writer {
    workspace: Workspace,
    state: WorkspaceState,
    events: Vec<EventRecord>,
    next_seq: u64,
    broadcast: broadcast::Sender<EventRecord>,
}

impl Writer {
    fn emit(&mut self, ts: Timestamp, kind: &str, payload: serde_json::Value) {
        let record = EventRecord {
            seq: self.next_seq,
            ts,
            kind: kind.to_string(),
            payload,
        };
        self.next_seq += 1;
        self.events.push(record.clone());
        let _ = self.broadcast.send(record);
    }

    fn emit_check_events(&mut self, summary: &ops::CheckSummary) {
        for event in &summary.events {
            self.emit(
                summary.at,
                "breach",
                serde_json::to_value(event).expect("event serializes"),
            );
        }
        if let Some(alert) = &summary.alert {
            self.emit(
                summary.at,
                "alert",
                serde_json::to_value(alert).expect("alert serializes"),
            );
        }
        self.emit(
            summary.at,
            "gate",
            serde_json::to_value(&summary.gates).expect("gates serialize"),
        );
    }

    async fn run(mut self, mut rx: mpsc::Receiver<Command>) {
        while let Some(command) = rx.recv().await {
            match command {
                Command::GetCase(reply) => {
                    let _ = reply.send(serialize_case(&self.state.case));
                }
                Command::GetStatus(reply) => {
                    let _ = reply.send(serde_json::json!({
                        "case_version": self.state.case.version,
                        "evaluated_at": self.state.last_check_at,
                        "statuses": self.state.statuses,
                    }));
                }
                Command::GetImpact(reply) => {
                    let _ = reply.send(self.state.impact.clone());
                }
                Command::GetReport(reply) => {
                    let _ = reply.send(ops::build_report(&self.workspace, &self.state));
                }
                Command::GetAudit(reply) => {
                    let _ = reply.send(self.state.audit.to_jsonl());
                }
                Command::GetEvents { after, reply } => {
                    let history = self
                        .events
                        .iter()
                        .filter(|e| e.seq > after)
                        .cloned()
                        .collect();
                    let _ = reply.send(history);
                }
                Command::Ingest { text, actor, reply } => {
                    let result = ops::run_ingest(&self.workspace, &mut self.state, &text, actor);
                    if let Ok(outcome) = &result {
                        if let Some(check) = &outcome.check {
                            let check = check.clone();
                            self.emit_check_events(&check);
                        }
                    }
                    let _ = reply.send(result);
                }
                Command::Scenario { name, actor, reply } => {
                    let result =
                        ops::run_simulate(&self.workspace, &mut self.state, &name, actor);
                    if let Ok(outcome) = &result {
                        let check = outcome.check.clone();
                        self.emit_check_events(&check);
                    }
                    let _ = reply.send(result);
                }
                Command::Recover {
                    actions,
                    cited_version,
                    actor,
                    reply,
                } => {
                    let result = ops::run_recover(
                        &self.workspace,
                        &mut self.state,
                        &actions,
                        cited_version,
                        actor,
                    );
                    let _ = reply.send(result);
                }
                Command::Revalidate { actor, reply } => {
                    let result = ops::run_revalidate(&self.workspace, &mut self.state, actor);
                    if let Ok(outcome) = &result {
                        let at = outcome.at;
                        let clean = outcome.revalidation.clean;
                        self.emit(
                            at,
                            "gate",
                            serde_json::json!({
                                "revalidation": {"clean": clean},
                                "gates": self.state.gates,
                            }),
                        );
                    }
                    let _ = reply.send(result);
                }
            }
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    commands: mpsc::Sender<Command>,
    events: broadcast::Sender<EventRecord>,
    auth: Arc<AuthConfig>,
}

/// Build the router and spawn its writer task.
pub fn build_app(workspace: Workspace, state: WorkspaceState, auth: AuthConfig) -> Router {
    let (tx, rx) = mpsc::channel(64);
    let (events_tx, _) = broadcast::channel(256);
    let writer = Writer {
        workspace,
        state,
        events: Vec::new(),
        next_seq: 1,
        broadcast: events_tx.clone(),
    };
    tokio::spawn(writer.run(rx));
    let app_state = AppState {
        commands: tx,
        events: events_tx,
        auth: Arc::new(auth),
    };
    Router::new()
        .route("/case", get(get_case))
        .route("/status", get(get_status))
        .route("/impact", get(get_impact))
        .route("/report", get(get_report))
        .route("/audit", get(get_audit))
        .route("/events", get(get_events))
        .route("/observations", post(post_observations))
        .route("/scenario", post(post_scenario))
        .route("/recovery", post(post_recovery))
        .route("/revalidate", post(post_revalidate))
        .with_state(app_state)
}

/// Run the service until the socket closes.
pub async fn serve(
    workspace: Workspace,
    state: WorkspaceState,
    auth: AuthConfig,
    addr: std::net::SocketAddr,
) -> anyhow::Result<()> {
    let app = build_app(workspace, state, auth);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}

fn error_body(error: &str, detail: impl ToString) -> serde_json::Value {
    serde_json::json!({"error": error, "detail": detail.to_string()})
}

fn authorize(state: &AppState, headers: &HeaderMap, scope: Scope) -> Result<Role, Response> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    let Some(token) = token else {
        return Err((
            StatusCode::UNAUTHORIZED,
            Json(error_body("unauthorized", "missing bearer token")),
        )
            .into_response());
    };
    let Some(role) = state.auth.role_for(token) else {
        return Err((
            StatusCode::UNAUTHORIZED,
            Json(error_body("unauthorized", "unknown token")),
        )
            .into_response());
    };
    if !state.auth.allows(role, scope) {
        return Err((
            StatusCode::FORBIDDEN,
            Json(error_body(
                "forbidden",
                format!("role lacks the {scope:?} scope"),
            )),
        )
            .into_response());
    }
    Ok(role)
}

async fn ask<T>(
    state: &AppState,
    make: impl FnOnce(oneshot::Sender<T>) -> Command,
) -> Result<T, Response> {
    let (tx, rx) = oneshot::channel();
    if state.commands.send(make(tx)).await.is_err() {
        return Err(service_down());
    }
    rx.await.map_err(|_| service_down())
}

fn service_down() -> Response {
    (
        StatusCode::SERVICE_UNAVAILABLE,
        Json(error_body("unavailable", "writer task stopped")),
    )
        .into_response()
}

fn op_error_response(err: OpError) -> Response {
    match &err {
        OpError::VersionConflict { .. } => (
            StatusCode::CONFLICT,
            Json(error_body("version-conflict", err.to_string())),
        )
            .into_response(),
        OpError::UnknownScenario(_) | OpError::Malformed(_) | OpError::Recovery(_) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(error_body("unprocessable", err.to_string())),
        )
            .into_response(),
        _ => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(error_body("internal", err.to_string())),
        )
            .into_response(),
    }
}

async fn get_case(State(state): State<AppState>, headers: HeaderMap) -> Response {
    if let Err(resp) = authorize(&state, &headers, Scope::Read) {
        return resp;
    }
    match ask(&state, Command::GetCase).await {
        Ok(doc) => ([(header::CONTENT_TYPE, "application/json")], doc).into_response(),
        Err(resp) => resp,
    }
}

async fn get_status(State(state): State<AppState>, headers: HeaderMap) -> Response {
    if let Err(resp) = authorize(&state, &headers, Scope::Read) {
        return resp;
    }
    match ask(&state, Command::GetStatus).await {
        Ok(value) => Json(value).into_response(),
        Err(resp) => resp,
    }
}

async fn get_impact(State(state): State<AppState>, headers: HeaderMap) -> Response {
    if let Err(resp) = authorize(&state, &headers, Scope::Read) {
        return resp;
    }
    match ask(&state, Command::GetImpact).await {
        Ok(Some(report)) => (
            [(header::CONTENT_TYPE, "application/json")],
            report.to_canonical_json(),
        )
            .into_response(),
        Ok(None) => (
            StatusCode::NOT_FOUND,
            Json(error_body("no-impact", "no consistency check has run yet")),
        )
            .into_response(),
        Err(resp) => resp,
    }
}

async fn get_report(State(state): State<AppState>, headers: HeaderMap) -> Response {
    if let Err(resp) = authorize(&state, &headers, Scope::Read) {
        return resp;
    }
    match ask(&state, Command::GetReport).await {
        Ok(report) => (
            [(header::CONTENT_TYPE, "application/json")],
            report.to_canonical_json(),
        )
            .into_response(),
        Err(resp) => resp,
    }
}

async fn get_audit(State(state): State<AppState>, headers: HeaderMap) -> Response {
    if let Err(resp) = authorize(&state, &headers, Scope::Read) {
        return resp;
    }
    match ask(&state, Command::GetAudit).await {
        Ok(text) => ([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response(),
        Err(resp) => resp,
    }
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    after: u64,
}

async fn get_events(
    State(state): State<AppState>,
    Query(query): Query<EventsQuery>,
    headers: HeaderMap,
) -> Response {
    if let Err(resp) = authorize(&state, &headers, Scope::Read) {
        return resp;
    }
    // subscribe before fetching history so nothing falls in the gap;
    // the seq filter deduplicates the overlap
    let live = state.events.subscribe();
    let history = match ask(&state, |reply| Command::GetEvents {
        after: query.after,
        reply,
    })
    .await
    {
        Ok(h) => h,
        Err(resp) => return resp,
    };
    let last_seen = query.after;
    let stream = futures::stream::unfold(
        (history.into_iter(), live, last_seen),
        |(mut history, mut live, mut last_seen)| async move {
            loop {
                if let Some(event) = history.next() {
                    if event.seq <= last_seen {
                        continue;
                    }
                    last_seen = event.seq;
                    return Some((event, (history, live, last_seen)));
                }
                match live.recv().await {
                    Ok(event) => {
                        if event.seq <= last_seen {
                            continue;
                        }
                        last_seen = event.seq;
                        return Some((event, (history, live, last_seen)));
                    }
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => return None,
                }
            }
        },
    )
    .map(|event| {
        let mut line = serde_json::to_string(&event).expect("event serializes");
        line.push('\n');
        Ok::<_, Infallible>(line)
    });
    (
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(stream),
    )
        .into_response()
}

use futures::StreamExt;

async fn post_observations(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: String,
) -> Response {
    let role = match authorize(&state, &headers, Scope::Ingest) {
        Ok(role) => role,
        Err(resp) => return resp,
    };
    match ask(&state, |reply| Command::Ingest {
        text: body,
        actor: Actor::Role(role),
        reply,
    })
    .await
    {
        Ok(Ok(outcome)) => Json(outcome).into_response(),
        Ok(Err(err)) => op_error_response(err),
        Err(resp) => resp,
    }
}

#[derive(Deserialize)]
struct ScenarioRequest {
    name: String,
}

async fn post_scenario(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: String,
) -> Response {
    let role = match authorize(&state, &headers, Scope::Scenario) {
        Ok(role) => role,
        Err(resp) => return resp,
    };
    let request: ScenarioRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => {
            return (
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(error_body("unprocessable", e.to_string())),
            )
                .into_response()
        }
    };
    match ask(&state, |reply| Command::Scenario {
        name: request.name,
        actor: Actor::Role(role),
        reply,
    })
    .await
    {
        Ok(Ok(outcome)) => Json(outcome).into_response(),
        Ok(Err(err)) => op_error_response(err),
        Err(resp) => resp,
    }
}

#[derive(Deserialize)]
struct RecoveryRequest {
    case_version: u64,
    actions: Vec<RecoveryAction>,
}

async fn post_recovery(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: String,
) -> Response {
    let role = match authorize(&state, &headers, Scope::Recover) {
        Ok(role) => role,
        Err(resp) => return resp,
    };
    let request: RecoveryRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => {
            return (
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(error_body("unprocessable", e.to_string())),
            )
                .into_response()
        }
    };
    match ask(&state, |reply| Command::Recover {
        actions: request.actions,
        cited_version: Some(request.case_version),
        actor: Actor::Role(role),
        reply,
    })
    .await
    {
        Ok(Ok(outcome)) => Json(outcome).into_response(),
        Ok(Err(err)) => op_error_response(err),
        Err(resp) => resp,
    }
}

async fn post_revalidate(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let role = match authorize(&state, &headers, Scope::Revalidate) {
        Ok(role) => role,
        Err(resp) => return resp,
    };
    match ask(&state, |reply| Command::Revalidate {
        actor: Actor::Role(role),
        reply,
    })
    .await
    {
        Ok(Ok(outcome)) => Json(outcome).into_response(),
        Ok(Err(err)) => op_error_response(err),
        Err(resp) => resp,
    }
}
