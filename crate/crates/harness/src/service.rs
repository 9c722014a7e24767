//! Live sessions over local HTTP. See `docs/service-api.md` for the contract.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use trustroute_core::engine::trace::TRACE_SCHEMA_VERSION;
use trustroute_core::engine::{
    Clock, Decision, EngineError, Observation, Policy, Session, SessionConfig, SimulatedTarget, StopReason,
    TraceRecord,
};
use trustroute_core::router::{InteractionState, RoutingDecision, Suggestion, TemplateLibrary};
use trustroute_core::target::{score_utterance, ArchetypeName, WordLists};
use trustroute_core::trust::{ComplianceOutcome, EngagementFeatures, NoiseConfig, SuspicionRisk};
use trustroute_core::Channel;

pub const API_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Simulated,
    HumanTarget,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    NotFound(String),
    #[error("session `{0}` already has a turn in flight")]
    Busy(String),
    #[error("session `{id}` has finished ({reason:?})")]
    Finished { id: String, reason: StopReason },
    #[error("{0}")]
    BadRequest(String),
    #[error("engine error: {0}")]
    Engine(#[from] EngineError),
}

impl ServiceError {
    fn parts(&self) -> (StatusCode, &'static str) {
        match self {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Busy(_) => (StatusCode::CONFLICT, "conflict"),
            ServiceError::Finished { .. } => (StatusCode::CONFLICT, "finished"),
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ServiceError::Engine(EngineError::Config(_)) => (StatusCode::BAD_REQUEST, "bad_request"),
            ServiceError::Engine(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: ErrorBody,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, code) = self.parts();
        let body = ErrorResponse { error: ErrorBody { code: code.into(), message: self.to_string() } };
        (status, Json(body)).into_response()
    }
}

fn default_archetype() -> ArchetypeName {
    ArchetypeName::Trusting
}

fn default_policy() -> Policy {
    Policy::Adaptive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_archetype")]
    pub archetype: ArchetypeName,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub horizon: Option<u32>,
    #[serde(default)]
    pub agent_noise_sigma: Option<f64>,
    /// Record zero stage timings so traces are reproducible byte for byte.
    #[serde(default)]
    pub frozen_clock: bool,
}

impl Default for CreateSessionRequest {
    fn default() -> Self {
        CreateSessionRequest {
            mode: Mode::Simulated,
            archetype: default_archetype(),
            policy: default_policy(),
            seed: 0,
            horizon: None,
            agent_noise_sigma: None,
            frozen_clock: false,
        }
    }
}

impl CreateSessionRequest {
    pub fn session_config(&self) -> Result<SessionConfig, ServiceError> {
        let mut cfg = SessionConfig::new(self.archetype, self.policy, self.seed);
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(sigma) = self.agent_noise_sigma {
            cfg.agent_trust.noise = NoiseConfig { sigma, ..cfg.agent_trust.noise };
        }
        if self.frozen_clock {
            cfg.clock = Clock::Frozen;
        }
        cfg.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        Ok(cfg)
    }
}

/// Target's reply to the pending suggestion.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRequest {
    #[serde(default)]
    pub utterance: String,
    /// Self-rated engagement; when absent it is scored from the utterance.
    #[serde(default)]
    pub engagement: Option<EngagementFeatures>,
    /// Self-rated suspicion; when absent the previous value carries over.
    #[serde(default)]
    pub suspicion: Option<f64>,
    /// Whether the pending request (if any) was granted. Defaults to no.
    #[serde(default)]
    pub complied: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub id: String,
    pub mode: Mode,
    /// Index of the next turn to be closed.
    pub turn: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionView {
    pub turn: u32,
    pub trust_estimate: f64,
    pub routing: RoutingDecision,
    pub suggestion: Suggestion,
}

impl From<&Decision> for DecisionView {
    fn from(d: &Decision) -> Self {
        DecisionView {
            turn: d.turn,
            trust_estimate: d.trust_estimate,
            routing: RoutingDecision { class: d.suggestion.class, exit_flag: d.suggestion.exit_flag },
            suggestion: d.suggestion.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session: SessionHandle,
    pub trust_estimate: f64,
    pub next: Option<DecisionView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResponse {
    pub session: SessionHandle,
    /// Record of the turn this reply closed.
    pub record: TraceRecord,
    /// Agent estimate after folding in the reply.
    pub trust_estimate: f64,
    pub next: Option<DecisionView>,
    pub stopped: Option<StopReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPreview {
    pub channel: Channel,
    pub difficulty: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateResponse {
    pub session: SessionHandle,
    pub state: InteractionState,
    pub trust_estimate: f64,
    pub pending: Option<DecisionView>,
    pub compliance_preview: Vec<ChannelPreview>,
    pub granted: Vec<Channel>,
    pub stopped: Option<StopReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceResponse {
    pub schema_version: u32,
    pub session: String,
    pub records: Vec<TraceRecord>,
}

struct Live {
    session: Session,
    mode: Mode,
    target: Option<SimulatedTarget>,
}

pub struct Slot {
    busy: AtomicBool,
    live: Mutex<Live>,
}

/// Marks a session's turn as in flight until dropped.
pub struct TurnGuard {
    slot: Arc<Slot>,
}

impl Drop for TurnGuard {
    fn drop(&mut self) {
        self.slot.busy.store(false, Ordering::Release);
    }
}

pub struct SessionStore {
    next_id: AtomicU64,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
    library: Arc<TemplateLibrary>,
    words: WordLists,
}

impl Default for SessionStore {
    fn default() -> Self {
        Self::new(Arc::new(TemplateLibrary::builtin()), WordLists::builtin())
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl SessionStore {
    pub fn new(library: Arc<TemplateLibrary>, words: WordLists) -> Self {
        SessionStore { next_id: AtomicU64::new(1), sessions: Mutex::new(HashMap::new()), library, words }
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ServiceError> {
        lock(&self.sessions).get(id).cloned().ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    fn handle(id: &str, live: &Live) -> SessionHandle {
        SessionHandle { id: id.to_string(), mode: live.mode, turn: live.session.turn() }
    }

    pub fn len(&self) -> usize {
        lock(&self.sessions).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create(&self, req: &CreateSessionRequest) -> Result<CreateSessionResponse, ServiceError> {
        let cfg = req.session_config()?;
        let target = (req.mode == Mode::Simulated).then(|| SimulatedTarget::new(cfg.persona.clone(), cfg.seed));
        let mut session = Session::new(cfg, Arc::clone(&self.library))?;
        let first = session.decide()?;
        let id = format!("s{:06}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let live = Live { session, mode: req.mode, target };
        let resp = CreateSessionResponse {
            session: Self::handle(&id, &live),
            trust_estimate: live.session.trust_estimate(),
            next: first.as_ref().map(DecisionView::from),
        };
        lock(&self.sessions).insert(id.clone(), Arc::new(Slot { busy: AtomicBool::new(false), live: Mutex::new(live) }));
        tracing::info!(session = %id, mode = ?req.mode, archetype = %req.archetype, policy = %req.policy, "session created");
        Ok(resp)
    }

    /// Claims the session for one turn; a second claim fails until the guard drops.
    pub fn begin_turn(&self, id: &str) -> Result<TurnGuard, ServiceError> {
        let slot = self.slot(id)?;
        if slot.busy.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
            return Err(ServiceError::Busy(id.to_string()));
        }
        Ok(TurnGuard { slot })
    }

    pub fn post_turn(&self, id: &str, req: &TurnRequest) -> Result<TurnResponse, ServiceError> {
        let guard = self.begin_turn(id)?;
        self.run_turn(id, &guard, req)
    }

    fn run_turn(&self, id: &str, guard: &TurnGuard, req: &TurnRequest) -> Result<TurnResponse, ServiceError> {
        let mut live = lock(&guard.slot.live);
        if let Some(reason) = live.session.stopped() {
            return Err(ServiceError::Finished { id: id.to_string(), reason });
        }
        let decision = live
            .session
            .pending()
            .cloned()
            .ok_or(ServiceError::Finished { id: id.to_string(), reason: StopReason::LadderExhausted })?;
        let clock = live.session.config().clock;
        let started = Instant::now();
        let obs = match live.mode {
            Mode::Simulated => {
                if req.engagement.is_some() || req.suspicion.is_some() || req.complied.is_some() {
                    return Err(ServiceError::BadRequest(
                        "engagement, suspicion and complied are only accepted in human_target mode".into(),
                    ));
                }
                let factors = live.session.config().factors.clone();
                let target = live.target.as_mut().expect("simulated sessions own a target");
                let (engagement, suspicion, compliance) =
                    target.react(&decision, &factors).map_err(|e| ServiceError::Engine(e.into()))?;
                let reply = (!req.utterance.is_empty()).then(|| req.utterance.clone());
                Observation { engagement, suspicion, compliance, reply, respond_ms: 0.0 }
            }
            Mode::HumanTarget => {
                let engagement = match req.engagement {
                    Some(e) => {
                        e.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
                        e
                    }
                    None => score_utterance(&req.utterance, &self.words),
                };
                let suspicion = match req.suspicion {
                    Some(s) => SuspicionRisk::new(s).map_err(|e| ServiceError::BadRequest(e.to_string()))?,
                    None => live.session.state().suspicion,
                };
                let compliance = decision.suggestion.request.map(|_| ComplianceOutcome(req.complied.unwrap_or(false)));
                Observation { engagement, suspicion, compliance, reply: Some(req.utterance.clone()), respond_ms: 0.0 }
            }
        };
        let respond_ms = match clock {
            Clock::Frozen => 0.0,
            Clock::Monotonic => started.elapsed().as_secs_f64() * 1e3,
        };
        let record = live.session.observe(Observation { respond_ms, ..obs })?.clone();
        let next = if live.session.stopped().is_none() { live.session.decide()? } else { None };
        Ok(TurnResponse {
            session: Self::handle(id, &live),
            record,
            trust_estimate: live.session.trust_estimate(),
            next: next.as_ref().map(DecisionView::from),
            stopped: live.session.stopped(),
        })
    }

    pub fn get_state(&self, id: &str) -> Result<StateResponse, ServiceError> {
        let slot = self.slot(id)?;
        let live = lock(&slot.live);
        let s = &live.session;
        let preview = s
            .compliance_preview()
            .map_err(|e| ServiceError::Engine(e.into()))?
            .into_iter()
            .map(|(r, p)| ChannelPreview { channel: r.channel, difficulty: r.difficulty, probability: p })
            .collect();
        let mut state = s.state().clone();
        state.trust_estimate = s.trust_estimate();
        Ok(StateResponse {
            session: Self::handle(id, &live),
            state,
            trust_estimate: s.trust_estimate(),
            pending: s.pending().map(DecisionView::from),
            compliance_preview: preview,
            granted: s.granted().to_vec(),
            stopped: s.stopped(),
        })
    }

    pub fn get_trace(&self, id: &str) -> Result<TraceResponse, ServiceError> {
        let slot = self.slot(id)?;
        let live = lock(&slot.live);
        Ok(TraceResponse {
            schema_version: TRACE_SCHEMA_VERSION,
            session: id.to_string(),
            records: live.session.records().to_vec(),
        })
    }

    /// Session config, for clients that replay traces.
    pub fn config(&self, id: &str) -> Result<SessionConfig, ServiceError> {
        let slot = self.slot(id)?;
        let live = lock(&slot.live);
        Ok(live.session.config().clone())
    }

    pub fn close(&self, id: &str) -> Result<(), ServiceError> {
        lock(&self.sessions).remove(id).map(|_| ()).ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }
}

fn parse<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ServiceError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid JSON body: {e}")))
}

async fn create(State(store): State<Arc<SessionStore>>, body: Bytes) -> Result<Response, ServiceError> {
    let req: CreateSessionRequest = parse(&body)?;
    Ok((StatusCode::CREATED, Json(store.create(&req)?)).into_response())
}

async fn turn(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<TurnResponse>, ServiceError> {
    let req: TurnRequest = parse(&body)?;
    Ok(Json(store.post_turn(&id, &req)?))
}

async fn state(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> Result<Json<StateResponse>, ServiceError> {
    Ok(Json(store.get_state(&id)?))
}

async fn trace(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> Result<Json<TraceResponse>, ServiceError> {
    Ok(Json(store.get_trace(&id)?))
}

async fn close(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> Result<StatusCode, ServiceError> {
    store.close(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/v1/health", get(|| async { Json(serde_json::json!({ "status": "ok", "api": API_VERSION })) }))
        .route("/v1/sessions", post(create))
        .route("/v1/sessions/{id}", axum::routing::delete(close))
        .route("/v1/sessions/{id}/turns", post(turn))
        .route("/v1/sessions/{id}/state", get(state))
        .route("/v1/sessions/{id}/trace", get(trace))
        .with_state(store)
}

pub async fn serve(addr: std::net::SocketAddr, store: Arc<SessionStore>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(store)).await
}

#[cfg(test)]
mod tests {
    use super::*;

    fn human() -> CreateSessionRequest {
        CreateSessionRequest { mode: Mode::HumanTarget, frozen_clock: true, ..Default::default() }
    }

    #[test]
    fn create_then_state_is_turn_zero() {
        let store = SessionStore::default();
        let c = store.create(&human()).unwrap();
        let s = store.get_state(&c.session.id).unwrap();
        assert_eq!((s.session.turn, s.trust_estimate), (0, 0.0));
        assert_eq!(c.next.unwrap().routing.class, trustroute_core::StrategyClass::Rapport);
        assert_eq!(s.compliance_preview.len(), 4);
        assert_eq!(store.get_state(&c.session.id).unwrap(), s);
    }

    #[test]
    fn ids_are_unique_and_close_removes() {
        let store = SessionStore::default();
        let a = store.create(&human()).unwrap().session.id;
        let b = store.create(&human()).unwrap().session.id;
        assert_ne!(a, b);
        store.close(&a).unwrap();
        assert!(matches!(store.get_state(&a), Err(ServiceError::NotFound(_))));
        assert!(matches!(store.close(&a), Err(ServiceError::NotFound(_))));
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn held_turn_rejects_second_caller() {
        let store = SessionStore::default();
        let id = store.create(&human()).unwrap().session.id;
        let guard = store.begin_turn(&id).unwrap();
        assert!(matches!(store.post_turn(&id, &TurnRequest::default()), Err(ServiceError::Busy(_))));
        assert_eq!(store.get_state(&id).unwrap().session.turn, 0);
        drop(guard);
        assert_eq!(store.post_turn(&id, &TurnRequest::default()).unwrap().session.turn, 1);
    }

    #[test]
    fn mode_specific_fields_are_checked() {
        let store = SessionStore::default();
        let sim = store.create(&CreateSessionRequest { frozen_clock: true, ..Default::default() }).unwrap().session.id;
        let with_rating = TurnRequest { suspicion: Some(0.5), ..Default::default() };
        assert!(matches!(store.post_turn(&sim, &with_rating), Err(ServiceError::BadRequest(_))));
        let hum = store.create(&human()).unwrap().session.id;
        let bad = TurnRequest { suspicion: Some(1.5), ..Default::default() };
        assert!(matches!(store.post_turn(&hum, &bad), Err(ServiceError::BadRequest(_))));
        assert_eq!(store.get_state(&hum).unwrap().session.turn, 0);
    }
}
