use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const WORKED: &str = "# worked example\nalpha=1\nbeta=0.5\ngamma=0.5\ndelta=0.1\nepsilon=0.2\nzeta=0.05\ntau1=1\ntau2=2\n";

fn boom(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boom"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Workspace with a worked-example config and a small series with two peaks.
fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("worked.cfg"), WORKED).unwrap();
    let mut csv = String::from("t,value\n");
    for (t, v) in [0.02, 0.05, 0.11, 0.16, 0.12, 0.09, 0.1, 0.13, 0.11, 0.09, 0.08, 0.075, 0.07]
        .iter()
        .enumerate()
    {
        csv.push_str(&format!("{t},{v}\n"));
    }
    fs::write(dir.path().join("series.csv"), csv).unwrap();
    fs::write(
        dir.path().join("fit.cfg"),
        "data=series.csv\nn_iter=400\nburn_in=100\nstep=0.05\n",
    )
    .unwrap();
    let path = dir.path().to_path_buf();
    (dir, path)
}

#[test]
fn stability_of_worked_example() {
    let (_guard, dir) = workspace();
    let o = boom(&["stability", "--config", "worked.cfg"], &dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("verdict: SufficientStable"), "{out}");
    assert!(out.contains("A = 0.8"));

    let o = boom(&["stability", "--config", "worked.cfg", "--out", "v.json"], &dir);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.join("v.json")).unwrap()).unwrap();
    assert_eq!(v["verdict"], "SufficientStable");
}

#[test]
fn usage_errors_exit_one() {
    let (_guard, dir) = workspace();
    let o = boom(&["stability", "--bogus"], &dir);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = boom(&[], &dir);
    assert_eq!(o.status.code(), Some(1));
    let o = boom(&["simulate", "--set", "tau1"], &dir);
    assert_eq!(o.status.code(), Some(1));
    let o = boom(&["--help"], &dir);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn override_violating_delay_order_exits_two() {
    let (_guard, dir) = workspace();
    let o = boom(
        &["simulate", "--config", "worked.cfg", "--set", "tau1=3", "--set", "tau2=2"],
        &dir,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tau1 < tau2"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn data_errors_exit_two() {
    let (_guard, dir) = workspace();
    fs::write(dir.join("dup.csv"), "t,value\n0,1\n1,2\n1,3\n").unwrap();
    let o = boom(&["fit", "--set", "data=dup.csv"], &dir);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dup.csv:4"), "{}", stderr(&o));
    let o = boom(&["fit"], &dir);
    assert_eq!(o.status.code(), Some(2));
    let o = boom(&["simulate", "--config", "missing.cfg"], &dir);
    assert_eq!(o.status.code(), Some(2));
    let o = boom(&["simulate", "--set", "alpah=1"], &dir);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpah"));
}

#[test]
fn divergence_exits_three() {
    let (_guard, dir) = workspace();
    let o = boom(
        &["simulate", "--set", "epsilon=30", "--set", "alpha=0.01", "--set", "horizon=400", "--set", "step=0.1"],
        &dir,
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
}

#[test]
fn simulate_is_byte_identical() {
    let (_guard, dir) = workspace();
    let args = ["simulate", "--config", "worked.cfg", "--set", "horizon=20"];
    let a = boom(&args, &dir);
    let b = boom(&args, &dir);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,y1,y2,y3,y4"));
    assert_eq!(lines.count(), 2001);
}

#[test]
fn fit_report_is_byte_identical_per_seed() {
    let (_guard, dir) = workspace();
    for out in ["a.json", "b.json"] {
        let o = boom(&["fit", "--config", "fit.cfg", "--seed", "5", "--out", out], &dir);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stderr(&o).contains("R²"));
    }
    let o = boom(&["fit", "--config", "fit.cfg", "--seed", "6", "--out", "c.json"], &dir);
    assert_eq!(o.status.code(), Some(0));
    let a = fs::read(dir.join("a.json")).unwrap();
    assert_eq!(a, fs::read(dir.join("b.json")).unwrap());
    assert_ne!(a, fs::read(dir.join("c.json")).unwrap());

    let report: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["chain"]["seed"], 5);
    assert_eq!(report["overlay"]["predicted"].as_array().unwrap().len(), 13);
    // heuristics: first peak at t = 3, largest later peak at t = 7
    assert_eq!(report["params"]["tau1"], 3.0);
    assert_eq!(report["params"]["tau2"], 4.0);
}

#[test]
fn pes_session_round_trip() {
    let (_guard, dir) = workspace();
    let o = boom(&["pes", "--config", "fit.cfg", "--out", "session.json"], &dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = boom(
        &["pes", "--session", "session.json", "--set", "tau2=6", "--set", "n_iter=300", "--set", "burn_in=50"],
        &dir,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s: Value = serde_json::from_str(&fs::read_to_string(dir.join("session.json")).unwrap()).unwrap();
    let log = s["log"].as_array().unwrap();
    assert_eq!(log.len(), 2);
    assert_eq!(log[1]["fixed"]["tau2"], 6.0);
    assert_eq!(log[1]["fixed"]["tau1"], log[0]["fixed"]["tau1"]);
    assert_eq!(s["status"], "AwaitingReview");

    let o = boom(&["pes", "--session", "session.json", "--finalize", "--out", "final.json"], &dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.join("final.json")).unwrap()).unwrap();
    let best = log
        .iter()
        .map(|e| e["report"]["r_squared"].as_f64().unwrap())
        .fold(f64::MIN, f64::max);
    assert_eq!(report["r_squared"].as_f64().unwrap(), best);

    let o = boom(&["pes", "--session", "session.json"], &dir);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("finalized"));
}

#[test]
fn serve_answers_simulation_requests() {
    let (_guard, dir) = workspace();
    let mut child = Command::new(env!("CARGO_BIN_EXE_boom"))
        .args(["serve", "--listen", "127.0.0.1:0", "--store", "store"])
        .current_dir(&dir)
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().rsplit("http://").next().unwrap().to_string();

    let body = r#"{"params":{"alpha":1,"beta":0.5,"gamma":0.5,"delta":0.1,"epsilon":0.2,"zeta":0.05,"tau1":1,"tau2":2},"horizon":10}"#;
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "POST /simulate HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"grid_points\":1001"));
    assert!(dir.join("store/sessions").is_dir());
}
