use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use boom_server::job::{Job, JobStatus};
use boom_server::store::SessionDoc;
use boom_server::{router, AppState, SessionCreated, SimulateResponse, StabilityResponse};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const BOUNDARY: &str = "boom-test-boundary";

/// Rise to a peak at t = 3, a dip, then a larger second peak at t = 8.
const SERIES: &str = "t,value\n0,2\n1,5\n2,9\n3,12\n4,8\n5,6\n6,9\n7,15\n8,20\n9,14\n10,10\n11,9\n";

fn multipart(fields: &[(&str, &str)]) -> Request<Body> {
    let mut body = String::new();
    for (name, content) in fields {
        body.push_str(&format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}.txt\"\r\n\r\n{content}\r\n"
        ));
    }
    body.push_str(&format!("--{BOUNDARY}--\r\n"));
    Request::post("/sessions")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(body))
        .unwrap()
}

fn post_json(uri: &str, body: Value) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn send_json<T: serde::de::DeserializeOwned>(app: &Router, req: Request<Body>) -> (StatusCode, T) {
    let (status, bytes) = send(app, req).await;
    let value = serde_json::from_slice(&bytes)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&bytes)));
    (status, value)
}

fn app(dir: &std::path::Path) -> Router {
    router(AppState::open(dir).unwrap())
}

const FAST: &str = "n_iter=300\nburn_in=100\nstep=0.05\n";

async fn create(app: &Router, config: &str) -> SessionCreated {
    let (status, created) = send_json(app, multipart(&[("series", SERIES), ("config", config)])).await;
    assert_eq!(status, StatusCode::CREATED);
    created
}

async fn wait_for(app: &Router, job_id: &str) -> (Job, Vec<f64>) {
    let mut progress = Vec::new();
    for _ in 0..600 {
        let (status, job): (_, Job) = send_json(app, get(&format!("/jobs/{job_id}"))).await;
        assert_eq!(status, StatusCode::OK);
        progress.push(job.progress);
        if job.status == JobStatus::Done || job.status == JobStatus::Failed {
            return (job, progress);
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("job {job_id} did not finish");
}

#[tokio::test]
async fn create_session_seeds_heuristics() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let created = create(&app, FAST).await;
    let s = &created.doc.session;
    assert_eq!(s.id.as_deref(), Some(created.id.as_str()));
    // 5% of the peak of 20
    assert!((s.fixed.zeta - 1.0).abs() < 1e-12);
    assert_eq!(s.fixed.tau1, 3.0);
    assert_eq!(s.fixed.tau2, 5.0);
    assert!(s.log.is_empty());
    assert_eq!(created.doc.mcmc.n_iter, 300);

    let (status, doc): (_, SessionDoc) = send_json(&app, get(&format!("/sessions/{}", created.id))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(doc, created.doc);
}

#[tokio::test]
async fn identical_uploads_get_distinct_ids() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let a = create(&app, FAST).await;
    let b = create(&app, FAST).await;
    assert_ne!(a.id, b.id);
}

#[tokio::test]
async fn bad_uploads_are_rejected_without_a_session() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body): (_, Value) = send_json(&app, multipart(&[("series", "")])).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("empty"));

    let (status, body): (_, Value) = send_json(&app, multipart(&[("series", "t,value\n0,1\n0,2\n1,3\n")])).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains(":3:"), "{body}");

    let (status, body): (_, Value) =
        send_json(&app, multipart(&[("series", SERIES), ("config", "tau1=3\ntau2=2\n")])).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("tau1 < tau2"));

    let (status, _): (_, Value) = send_json(&app, multipart(&[("config", FAST)])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    assert_eq!(std::fs::read_dir(dir.path().join("sessions")).unwrap().count(), 0);
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    for uri in ["/jobs/nope", "/sessions/nope", "/sessions/nope/stability"] {
        let (status, body): (_, Value) = send_json(&app, get(uri)).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["kind"], "not_found");
    }
    let (status, _): (_, Value) = send_json(&app, post_json("/sessions/nope/fit", json!({}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn fit_job_runs_to_completion() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let created = create(&app, "n_iter=20000\nburn_in=5000\nstep=0.05\n").await;
    let id = &created.id;

    let (status, job): (_, Job) = send_json(
        &app,
        post_json(
            &format!("/sessions/{id}/fit"),
            json!({"adjustment": {"zeta": 0.8, "tau1": 2.0, "tau2": 5.0}}),
        ),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(job.status, JobStatus::Queued);

    // single writer per session
    let (status, body): (_, Value) = send_json(&app, post_json(&format!("/sessions/{id}/fit"), json!({}))).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");

    let (done, progress) = wait_for(&app, &job.id).await;
    assert_eq!(done.status, JobStatus::Done, "{:?}", done.error);
    assert!(progress.windows(2).all(|w| w[0] <= w[1]), "{progress:?}");
    assert_eq!(done.progress, 1.0);
    let result = done.result.unwrap();
    assert_eq!(result.iteration, 0);

    let (_, doc): (_, SessionDoc) = send_json(&app, get(&format!("/sessions/{id}"))).await;
    assert_eq!(doc.session.log.len(), 1);
    assert_eq!(doc.session.fixed.tau1, 2.0);
    let entry = &doc.session.log[0];
    assert_eq!(entry.report, result.report);
    assert!((entry.report.recomputed_r_squared().unwrap() - entry.report.r_squared).abs() <= 1e-12);

    let (status, stab): (_, StabilityResponse) = send_json(&app, get(&format!("/sessions/{id}/stability"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stab.iteration, Some(0));
    assert_eq!(stab.params, entry.report.params);
    assert_eq!(stab.stability, entry.report.stability);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn finalize_then_reject_mutations() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let created = create(&app, FAST).await;
    let id = &created.id;

    let (status, _): (_, Value) = send_json(&app, post_json(&format!("/sessions/{id}/finalize"), json!({}))).await;
    assert_eq!(status, StatusCode::CONFLICT, "nothing to finalize yet");

    for _ in 0..2 {
        let (_, job): (_, Job) = send_json(&app, post_json(&format!("/sessions/{id}/fit"), json!({}))).await;
        let (done, _) = wait_for(&app, &job.id).await;
        assert_eq!(done.status, JobStatus::Done, "{:?}", done.error);
    }
    let (status, fin): (_, Value) =
        send_json(&app, post_json(&format!("/sessions/{id}/finalize"), json!({}))).await;
    assert_eq!(status, StatusCode::OK);
    let (_, doc): (_, SessionDoc) = send_json(&app, get(&format!("/sessions/{id}"))).await;
    let best = doc.session.best_index().unwrap();
    assert_eq!(fin["final_index"], best);
    assert_eq!(doc.session.final_index, Some(best));

    let (status, _): (_, Value) = send_json(&app, post_json(&format!("/sessions/{id}/fit"), json!({}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _): (_, Value) = send_json(&app, post_json(&format!("/sessions/{id}/finalize"), json!({}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (_, after): (_, SessionDoc) = send_json(&app, get(&format!("/sessions/{id}"))).await;
    assert_eq!(after.session.log.len(), 2);
}

#[tokio::test]
async fn invalid_fit_requests() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let created = create(&app, FAST).await;
    let uri = format!("/sessions/{}/fit", created.id);
    let (status, body): (_, Value) = send_json(
        &app,
        post_json(&uri, json!({"adjustment": {"zeta": 0.1, "tau1": 4.0, "tau2": 4.0}})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("tau1 < tau2"));
    let (status, _): (_, Value) = send_json(&app, post_json(&uri, json!({"n_iter": 10, "burn_in": 20}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _): (_, Value) = send_json(&app, post_json(&uri, json!({"bogus": 1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    // rejected requests leave the session free
    let (status, _): (_, Job) = send_json(&app, post_json(&uri, json!({"n_iter": 50, "burn_in": 10}))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn restart_reproduces_get_responses() {
    let dir = tempfile::tempdir().unwrap();
    let (id, job_id, before) = {
        let app = app(dir.path());
        let created = create(&app, FAST).await;
        let (_, job): (_, Job) =
            send_json(&app, post_json(&format!("/sessions/{}/fit", created.id), json!({}))).await;
        wait_for(&app, &job.id).await;
        let mut before = Vec::new();
        for uri in [
            format!("/sessions/{}", created.id),
            format!("/sessions/{}/stability", created.id),
            format!("/jobs/{}", job.id),
        ] {
            before.push(send(&app, get(&uri)).await);
        }
        (created.id, job.id, before)
    };
    let app = app(dir.path());
    let mut after = Vec::new();
    for uri in [
        format!("/sessions/{id}"),
        format!("/sessions/{id}/stability"),
        format!("/jobs/{job_id}"),
    ] {
        after.push(send(&app, get(&uri)).await);
    }
    assert_eq!(before, after);
}

#[tokio::test]
async fn unfinished_jobs_fail_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::open(dir.path()).unwrap();
    let store = boom_server::store::Store::open(state.store_dir()).unwrap();
    let job = Job::queued("stale".into(), boom_server::job::JobKind::Fit, "s".into());
    store.save_job(&job).unwrap();
    drop(state);
    let app = app(dir.path());
    let (_, job): (_, Job) = send_json(&app, get("/jobs/stale")).await;
    assert_eq!(job.status, JobStatus::Failed);
    assert!(job.error.unwrap().contains("restart"));
}

fn worked() -> Value {
    json!({"alpha": 1.0, "beta": 0.5, "gamma": 0.5, "delta": 0.1, "epsilon": 0.2,
           "zeta": 0.05, "tau1": 1.0, "tau2": 2.0})
}

#[tokio::test]
async fn simulate_preview_approaches_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, sim): (_, SimulateResponse) =
        send_json(&app, post_json("/simulate", json!({"params": worked(), "horizon": 300.0}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(sim.grid_points, 30_001);
    assert!(sim.times.len() <= 2000);
    assert_eq!(*sim.times.last().unwrap(), 300.0);
    assert!((sim.y2.last().unwrap() - 0.0625).abs() < 1e-4);
    assert!((sim.equilibrium.unwrap().y2_star - 0.0625).abs() < 1e-15);
}

#[tokio::test]
async fn simulate_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, sim): (_, SimulateResponse) =
        send_json(&app, post_json("/simulate", json!({"params": worked(), "horizon": 0.0}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(sim.times, vec![0.0]);
    assert_eq!(sim.y1, vec![1.0]);

    let mut bad = worked();
    bad["tau1"] = json!(3.0);
    let (status, body): (_, Value) =
        send_json(&app, post_json("/simulate", json!({"params": bad, "horizon": 10.0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("tau1 < tau2"), "{body}");

    // epsilon far above beta + gamma makes the flow grow without bound
    let mut wild = worked();
    wild["epsilon"] = json!(30.0);
    wild["alpha"] = json!(0.01);
    let (status, body): (_, Value) = send_json(
        &app,
        post_json("/simulate", json!({"params": wild, "horizon": 400.0, "step": 0.1})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    assert_eq!(body["kind"], "divergence");
    assert!(body["time"].as_f64().unwrap() > 0.0);
}

#[test]
fn state_is_shareable() {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<Arc<AppState>>();
}
