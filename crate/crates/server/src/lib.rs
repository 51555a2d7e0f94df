//! HTTP API over estimation sessions, background fitting jobs and simulation previews.
//!
//! Every request and response body is JSON in the same document format the
//! command-line tool writes to disk.

pub mod job;
pub mod store;

use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use boom_core::dde::{integrate, HistorySpec};
use boom_core::io::{parse_series, RunConfig};
use boom_core::pes::FixedValues;
use boom_core::report::{FitReport, McmcConfig};
use boom_core::stability::{check_stability, nontrivial, EquilibriumPoint, StabilityVerdict};
use boom_core::{BoomParams, Error, StateVec};
use serde::{Deserialize, Serialize};

use crate::job::{Job, JobKind, JobResult, JobStatus};
use crate::store::{SessionDoc, Store};

/// Upper bound on the number of points returned by a simulation preview.
pub const MAX_PREVIEW_POINTS: usize = 2000;

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    time: Option<f64>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    time: Option<f64>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
            time: None,
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no {what} with id {id:?}"))
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Divergence { time } => Self {
                time: Some(time),
                ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, "divergence", message)
            },
            Error::Session(_) => Self::conflict(message),
            Error::Io { .. } => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
            Error::Json(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
            _ => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.message,
            kind: self.kind,
            time: self.time,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub struct AppState {
    store: Store,
    jobs: Mutex<HashMap<String, Job>>,
    /// Sessions with a fit job in flight.
    busy: Mutex<HashSet<String>>,
}

impl AppState {
    /// Opens the store. Jobs left unfinished by a previous process are marked failed.
    pub fn open(store_dir: impl Into<PathBuf>) -> boom_core::Result<Arc<Self>> {
        let store = Store::open(store_dir)?;
        for mut job in store.jobs()? {
            if !job.status.is_finished() {
                job.finish(Err("interrupted by server restart".into()));
                store.save_job(&job)?;
            }
        }
        Ok(Arc::new(Self {
            store,
            jobs: Mutex::new(HashMap::new()),
            busy: Mutex::new(HashSet::new()),
        }))
    }

    pub fn store_dir(&self) -> &FsPath {
        self.store.root()
    }

    fn session(&self, id: &str) -> ApiResult<SessionDoc> {
        self.store
            .load_session(id)?
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    fn publish(&self, job: &Job) {
        self.jobs.lock().unwrap().insert(job.id.clone(), job.clone());
        if let Err(e) = self.store.save_job(job) {
            eprintln!("failed to persist job {}: {e}", job.id);
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/fit", post(start_fit))
        .route("/sessions/{id}/stability", get(session_stability))
        .route("/sessions/{id}/finalize", post(finalize_session))
        .route("/jobs/{id}", get(poll_job))
        .route("/simulate", post(simulate))
        .layer(DefaultBodyLimit::max(16 * 1024 * 1024))
        .with_state(state)
}

/// Serves the API on `addr` until the process is stopped.
pub async fn serve(addr: SocketAddr, store_dir: PathBuf) -> std::io::Result<()> {
    let state = AppState::open(store_dir).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

/// Blocking wrapper around [`serve`] with its own runtime.
pub fn serve_blocking(addr: SocketAddr, store_dir: PathBuf) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(addr, store_dir))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
    pub doc: SessionDoc,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    mut multipart: Multipart,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let mut series = None;
    let mut config = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(e.to_string()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let file_name = field.file_name().map(str::to_string);
        let text = field.text().await.map_err(|e| ApiError::bad_request(e.to_string()))?;
        match name.as_str() {
            "series" => series = Some((text, file_name)),
            "config" => config = Some(text),
            other => return Err(ApiError::bad_request(format!("unexpected field {other:?}"))),
        }
    }
    let (text, file_name) = series.ok_or_else(|| ApiError::bad_request("missing field \"series\""))?;
    let cfg = match config {
        Some(c) => RunConfig::parse(&c, FsPath::new("."))?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    let source = PathBuf::from(file_name.unwrap_or_else(|| "series.csv".into()));
    let label = source
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut observed = parse_series(&text, &label, &source)?;
    if cfg.normalize {
        observed = observed.normalized()?;
    }
    let id = uuid::Uuid::new_v4().to_string();
    let mut session = cfg.start_session(observed)?;
    session.id = Some(id.clone());
    let doc = SessionDoc {
        session,
        mcmc: cfg.mcmc(),
    };
    app.store.save_session(&id, &doc)?;
    Ok((StatusCode::CREATED, Json(SessionCreated { id, doc })))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionDoc>> {
    Ok(Json(app.session(&id)?))
}

/// Body of `POST /sessions/{id}/fit`; every field is optional.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitRequest {
    pub adjustment: Option<FixedValues>,
    pub n_iter: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub scales: Option<[f64; 5]>,
}

impl FitRequest {
    fn mcmc(&self, base: &McmcConfig) -> McmcConfig {
        McmcConfig {
            n_iter: self.n_iter.unwrap_or(base.n_iter),
            burn_in: self.burn_in.unwrap_or(base.burn_in),
            seed: self.seed.unwrap_or(base.seed),
            scales: self.scales.or(base.scales),
        }
    }
}

fn parse_body<T: Default + serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

async fn start_fit(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Job>)> {
    let req: FitRequest = parse_body(&body)?;
    let job = {
        let mut busy = app.busy.lock().unwrap();
        if busy.contains(&id) {
            return Err(ApiError::conflict(format!("session {id} already has a fit job running")));
        }
        let doc = app.session(&id)?;
        if doc.session.status == boom_core::pes::SessionStatus::Finalized {
            return Err(ApiError::conflict(format!("session {id} is finalized")));
        }
        if let Some(adj) = &req.adjustment {
            adj.check()?;
        }
        let mcmc = req.mcmc(&doc.mcmc);
        mcmc.check()?;
        busy.insert(id.clone());
        let job = Job::queued(uuid::Uuid::new_v4().to_string(), JobKind::Fit, id.clone());
        app.publish(&job);
        let worker = app.clone();
        let job_id = job.id.clone();
        tokio::task::spawn_blocking(move || run_fit(&worker, &job_id, doc, req.adjustment, mcmc));
        job
    };
    Ok((StatusCode::ACCEPTED, Json(job)))
}

fn run_fit(app: &AppState, job_id: &str, mut doc: SessionDoc, adjustment: Option<FixedValues>, mcmc: McmcConfig) {
    let session_id = doc.session.id.clone().unwrap_or_default();
    let update = |f: &dyn Fn(&mut Job)| -> Job {
        let mut jobs = app.jobs.lock().unwrap();
        let job = jobs.get_mut(job_id).expect("job registered before start");
        f(job);
        job.clone()
    };
    let running = update(&|j| {
        j.advance(JobStatus::Running);
    });
    app.publish(&running);

    let stride = (mcmc.n_iter / 100).max(1);
    let outcome = doc
        .session
        .iterate_with_progress(adjustment, &mcmc, |done, total| {
            if done % stride == 0 || done == total {
                update(&|j| j.set_progress(done as f64 / total as f64));
            }
        })
        .map(|entry| entry.index)
        .map_err(|e| e.to_string())
        .and_then(|iteration| {
            app.store
                .save_session(&session_id, &doc)
                .map_err(|e| e.to_string())?;
            let report = doc.session.log[iteration].report.clone();
            Ok(JobResult {
                session_id: session_id.clone(),
                iteration,
                report,
            })
        });
    // release the session before the job reports completion
    app.busy.lock().unwrap().remove(&session_id);
    let finished = update(&|j| j.finish(outcome.clone()));
    app.publish(&finished);
}

async fn poll_job(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Job>> {
    if let Some(job) = app.jobs.lock().unwrap().get(&id) {
        return Ok(Json(job.clone()));
    }
    app.store
        .load_job(&id)?
        .map(Json)
        .ok_or_else(|| ApiError::not_found("job", &id))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StabilityResponse {
    pub params: BoomParams,
    /// Log entry the parameters come from; `None` before the first fit.
    pub iteration: Option<usize>,
    pub stability: Option<StabilityVerdict>,
    pub note: Option<String>,
}

async fn session_stability(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<StabilityResponse>> {
    let doc = app.session(&id)?;
    let s = &doc.session;
    let iteration = s.final_index.or_else(|| s.log.len().checked_sub(1));
    let params = match iteration {
        Some(i) => s.log[i].report.params,
        None => s.theta.with_fixed(s.fixed.zeta, s.fixed.tau1, s.fixed.tau2),
    };
    let (stability, note) = match check_stability(&params) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(Json(StabilityResponse {
        params,
        iteration,
        stability,
        note,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Finalized {
    pub session_id: String,
    pub final_index: usize,
    pub report: FitReport,
}

async fn finalize_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Finalized>> {
    let busy = app.busy.lock().unwrap();
    if busy.contains(&id) {
        return Err(ApiError::conflict(format!("session {id} has a fit job running")));
    }
    let mut doc = app.session(&id)?;
    let report = doc.session.finalize()?;
    app.store.save_session(&id, &doc)?;
    drop(busy);
    Ok(Json(Finalized {
        session_id: id,
        final_index: doc.session.final_index.expect("set by finalize"),
        report,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateRequest {
    pub params: BoomParams,
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_initial_state")]
    pub initial_state: StateVec,
}

fn default_step() -> f64 {
    0.01
}

fn default_initial_state() -> StateVec {
    StateVec::new(1.0, 0.01, 0.0, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub times: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub y3: Vec<f64>,
    pub y4: Vec<f64>,
    /// Number of grid points before downsampling.
    pub grid_points: usize,
    pub equilibrium: Option<EquilibriumPoint>,
}

/// Evenly spaced indices into `0..n`, at most `max` of them, always keeping both ends.
pub fn downsample_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let last = (n - 1) as f64;
    (0..max)
        .map(|k| (k as f64 * last / (max - 1) as f64).round() as usize)
        .collect()
}

fn simulate_preview(req: &SimulateRequest) -> boom_core::Result<SimulateResponse> {
    let params = req.params.validated()?;
    if !(req.horizon.is_finite() && req.horizon >= 0.0) {
        return Err(Error::Config(format!("horizon must be >= 0, got {}", req.horizon)));
    }
    if !req.initial_state.is_finite() {
        return Err(Error::NonFinite {
            component: "initial_state".into(),
        });
    }
    let equilibrium = nontrivial(&params).ok();
    let mut out = SimulateResponse {
        times: Vec::new(),
        y1: Vec::new(),
        y2: Vec::new(),
        y3: Vec::new(),
        y4: Vec::new(),
        grid_points: 1,
        equilibrium,
    };
    let mut push = |t: f64, s: StateVec| {
        out.times.push(t);
        out.y1.push(s.y1);
        out.y2.push(s.y2);
        out.y3.push(s.y3);
        out.y4.push(s.y4);
    };
    if req.horizon == 0.0 {
        push(0.0, req.initial_state);
        return Ok(out);
    }
    let traj = integrate(&params, &HistorySpec::constant(req.initial_state), req.horizon, req.step)?;
    let grid_points = traj.len();
    for k in downsample_indices(grid_points, MAX_PREVIEW_POINTS) {
        push(traj.time(k), traj.state(k));
    }
    out.grid_points = grid_points;
    Ok(out)
}

async fn simulate(body: Bytes) -> ApiResult<Json<SimulateResponse>> {
    let req: SimulateRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let result = tokio::task::spawn_blocking(move || simulate_preview(&req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok(Json(result?))
}
