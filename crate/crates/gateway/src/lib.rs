//! HTTP control service for live gate sessions.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | `{gate, seed?, speed?}` | `{id, tick, inputs, channels}` |
//! | GET | `/sessions/{id}` | | snapshot |
//! | POST | `/sessions/{id}/inputs` | `{"A": 1, ...}` | `{changed, tick, inputs}` |
//! | POST | `/sessions/{id}/pause`, `/resume` | | `{running, speed}` |
//! | POST | `/sessions/{id}/speed` | `{ticks_per_second}` | `{running, speed}` |
//! | POST | `/sessions/{id}/step` | `{ticks}` | snapshot |
//! | GET | `/sessions/{id}/outcome` | | gate outcome of the current operation |
//! | GET | `/sessions/{id}/script` | | input changes as a CLI script |
//! | GET | `/sessions/{id}/stream` | | NDJSON snapshots, then `{"end": true}` |
//! | DELETE | `/sessions/{id}` | | `{closed}` |
//!
//! Sessions start paused at tick 0 with every input at 0. A running session
//! advances `speed` ticks per real second on its own timer.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use optoslime_core::calibration::Calibration;
use optoslime_core::gates::{build, GateError, GateKind, GateOutcome, GateSim, Prepared, Snapshot};
use optoslime_core::record::{Script, ScriptStep};

/// Largest side of the downsampled trail grid in snapshots.
pub const SNAPSHOT_SIDE: usize = 128;
pub const MAX_SPEED: f64 = 100_000.0;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no session {0}")]
    UnknownSession(u64),
    #[error("session capacity of {0} reached")]
    Capacity(usize),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Gate(#[from] GateError),
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let status = match &self {
            GatewayError::UnknownSession(_) => StatusCode::NOT_FOUND,
            GatewayError::Capacity(_) => StatusCode::SERVICE_UNAVAILABLE,
            GatewayError::BadRequest(_) | GatewayError::Gate(_) => StatusCode::BAD_REQUEST,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub capacity: usize,
    /// Interval between timer ticks and between stream messages.
    pub cadence: Duration,
    pub calibration: Calibration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig { capacity: 16, cadence: Duration::from_millis(250), calibration: Calibration::default() }
    }
}

struct Session {
    sim: GateSim,
    seed: u64,
    running: bool,
    speed: f64,
    /// Fractional ticks owed by the timer.
    owed: f64,
    closed: bool,
    changes: Vec<ScriptStep>,
}

type Shared = Arc<Mutex<Session>>;

#[derive(Clone)]
pub struct AppState {
    config: Arc<GatewayConfig>,
    sessions: Arc<Mutex<BTreeMap<u64, Shared>>>,
    next_id: Arc<Mutex<u64>>,
    prepared: Arc<Mutex<BTreeMap<GateKind, Arc<Prepared>>>>,
}

impl AppState {
    pub fn new(config: GatewayConfig) -> Self {
        AppState {
            config: Arc::new(config),
            sessions: Arc::default(),
            next_id: Arc::new(Mutex::new(1)),
            prepared: Arc::default(),
        }
    }

    fn session(&self, id: u64) -> Result<Shared, GatewayError> {
        self.sessions.lock().expect("session map lock").get(&id).cloned().ok_or(GatewayError::UnknownSession(id))
    }

    fn prepared(&self, kind: GateKind) -> Result<Arc<Prepared>, GatewayError> {
        let mut cache = self.prepared.lock().expect("harness cache lock");
        if let Some(p) = cache.get(&kind) {
            return Ok(Arc::clone(p));
        }
        let p = Prepared::new(build(kind, 10.0, 9.0), self.config.calibration.clone())?;
        cache.insert(kind, Arc::clone(&p));
        Ok(p)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(snapshot).delete(close))
        .route("/sessions/{id}/inputs", post(set_inputs))
        .route("/sessions/{id}/pause", post(pause))
        .route("/sessions/{id}/resume", post(resume))
        .route("/sessions/{id}/speed", post(set_speed))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/outcome", get(outcome))
        .route("/sessions/{id}/script", get(script))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub gate: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_speed")]
    pub speed: f64,
}

fn default_speed() -> f64 {
    60.0
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: u64,
    pub tick: u64,
    pub inputs: BTreeMap<String, u8>,
    pub channels: Vec<String>,
}

fn check_speed(speed: f64) -> Result<f64, GatewayError> {
    if (0.0..=MAX_SPEED).contains(&speed) {
        Ok(speed)
    } else {
        Err(GatewayError::BadRequest(format!("speed must lie in [0, {MAX_SPEED}] ticks per second")))
    }
}

async fn create_session(State(state): State<AppState>, Json(req): Json<CreateRequest>) -> Result<(StatusCode, Json<Created>), GatewayError> {
    let kind: GateKind = req.gate.parse()?;
    let speed = check_speed(req.speed)?;
    {
        let sessions = state.sessions.lock().expect("session map lock");
        if sessions.len() >= state.config.capacity {
            return Err(GatewayError::Capacity(state.config.capacity));
        }
    }
    let st = state.clone();
    let prepared = tokio::task::spawn_blocking(move || st.prepared(kind)).await.expect("preparation task")?;
    let inputs: BTreeMap<String, u8> = prepared.harness.channels().into_iter().map(|c| (c, 0)).collect();
    let sim = GateSim::new(Arc::clone(&prepared), &inputs, req.seed)?;
    let session = Arc::new(Mutex::new(Session {
        sim,
        seed: req.seed,
        running: false,
        speed,
        owed: 0.0,
        closed: false,
        changes: vec![ScriptStep { tick: 0, inputs: inputs.clone() }],
    }));
    let id = {
        let mut sessions = state.sessions.lock().expect("session map lock");
        if sessions.len() >= state.config.capacity {
            return Err(GatewayError::Capacity(state.config.capacity));
        }
        let mut next = state.next_id.lock().expect("id lock");
        let id = *next;
        *next += 1;
        sessions.insert(id, Arc::clone(&session));
        id
    };
    tokio::spawn(drive(Arc::clone(&session), state.config.cadence));
    Ok((StatusCode::CREATED, Json(Created { id, tick: 0, inputs, channels: prepared.harness.channels() })))
}

/// The session's own timer: advances a running session by its speed.
async fn drive(session: Shared, cadence: Duration) {
    let mut timer = tokio::time::interval(cadence);
    timer.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        timer.tick().await;
        let s = Arc::clone(&session);
        let alive = tokio::task::spawn_blocking(move || {
            let mut g = s.lock().expect("session lock");
            if g.closed {
                return false;
            }
            if g.running {
                g.owed += g.speed * cadence.as_secs_f64();
                let n = g.owed.floor();
                g.owed -= n;
                g.sim.advance(n as u64);
            }
            true
        })
        .await
        .unwrap_or(false);
        if !alive {
            break;
        }
    }
}

async fn snapshot(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Json<Snapshot>, GatewayError> {
    let s = state.session(id)?;
    let snap = s.lock().expect("session lock").sim.snapshot(SNAPSHOT_SIDE);
    Ok(Json(snap))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InputsAck {
    pub changed: bool,
    /// Tick at which the latch was set; the LEDs follow from the next tick.
    pub tick: u64,
    pub inputs: BTreeMap<String, u8>,
}

async fn set_inputs(
    State(state): State<AppState>,
    Path(id): Path<u64>,
    Json(bits): Json<BTreeMap<String, u8>>,
) -> Result<Json<InputsAck>, GatewayError> {
    let s = state.session(id)?;
    let mut g = s.lock().expect("session lock");
    let changed = g.sim.set_inputs(&bits)?;
    let tick = g.sim.tick();
    if changed {
        let latch = g.sim.inputs().clone();
        g.changes.push(ScriptStep { tick, inputs: latch });
    }
    Ok(Json(InputsAck { changed, tick, inputs: g.sim.inputs().clone() }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Clock {
    pub running: bool,
    pub speed: f64,
    pub tick: u64,
}

fn clock(g: &Session) -> Json<Clock> {
    Json(Clock { running: g.running, speed: g.speed, tick: g.sim.tick() })
}

async fn pause(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Json<Clock>, GatewayError> {
    let s = state.session(id)?;
    let mut g = s.lock().expect("session lock");
    g.running = false;
    g.owed = 0.0;
    Ok(clock(&g))
}

async fn resume(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Json<Clock>, GatewayError> {
    let s = state.session(id)?;
    let mut g = s.lock().expect("session lock");
    g.running = true;
    Ok(clock(&g))
}

#[derive(Debug, Deserialize)]
pub struct SpeedRequest {
    pub ticks_per_second: f64,
}

async fn set_speed(State(state): State<AppState>, Path(id): Path<u64>, Json(req): Json<SpeedRequest>) -> Result<Json<Clock>, GatewayError> {
    let speed = check_speed(req.ticks_per_second)?;
    let s = state.session(id)?;
    let mut g = s.lock().expect("session lock");
    g.speed = speed;
    Ok(clock(&g))
}

#[derive(Debug, Deserialize)]
pub struct StepRequest {
    pub ticks: u64,
}

async fn step(State(state): State<AppState>, Path(id): Path<u64>, Json(req): Json<StepRequest>) -> Result<Json<Snapshot>, GatewayError> {
    let s = state.session(id)?;
    let snap = tokio::task::spawn_blocking(move || {
        let mut g = s.lock().expect("session lock");
        g.sim.advance(req.ticks);
        g.sim.snapshot(SNAPSHOT_SIDE)
    })
    .await
    .expect("step task");
    Ok(Json(snap))
}

async fn outcome(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Json<GateOutcome>, GatewayError> {
    let s = state.session(id)?;
    let o = s.lock().expect("session lock").sim.outcome();
    Ok(Json(o))
}

async fn script(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Response, GatewayError> {
    let s = state.session(id)?;
    let g = s.lock().expect("session lock");
    let text = format!("# seed {}\n{}", g.seed, Script { steps: g.changes.clone(), end: Some(g.sim.tick()) }.to_text());
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

async fn close(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Json<serde_json::Value>, GatewayError> {
    let s = state.sessions.lock().expect("session map lock").remove(&id).ok_or(GatewayError::UnknownSession(id))?;
    s.lock().expect("session lock").closed = true;
    Ok(Json(serde_json::json!({ "closed": id })))
}

/// Snapshot lines at the configured cadence; a final `{"end": true}` line
/// once the session closes.
async fn stream(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Response, GatewayError> {
    let s = state.session(id)?;
    let cadence = state.config.cadence;
    let lines = futures::stream::unfold(Some((s, true)), move |st| async move {
        let (s, first) = st?;
        if !first {
            tokio::time::sleep(cadence).await;
        }
        let snap = {
            let g = s.lock().expect("session lock");
            (!g.closed).then(|| g.sim.snapshot(SNAPSHOT_SIDE))
        };
        let (line, next) = match snap {
            Some(snap) => (serde_json::to_string(&snap).expect("snapshot serialises"), Some((s, false))),
            None => (serde_json::json!({ "end": true, "session": id }).to_string(), None),
        };
        Some((Ok::<_, std::convert::Infallible>(line + "\n"), next))
    });
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(lines)).into_response())
}
