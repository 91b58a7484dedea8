use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const QUERY: &str =
    "How is BYD expanding overseas, and how do its battery technology and pricing shape its global competitiveness?";

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../runtime/tests/fixtures/byd_golden.json")
}

fn hdr(db: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hdr"));
    cmd.env_remove("HDR_DB_PATH")
        .env_remove("HDR_HEARTBEAT_TIMEOUT_SECS");
    if let Some(db) = db {
        cmd.arg("--db").arg(db);
    }
    cmd.args(args).output().expect("hdr runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn run_args<'a>(script: &'a str, format: &'a str) -> Vec<&'a str> {
    vec![
        "run",
        "--query",
        QUERY,
        "--script",
        script,
        "--now",
        "2026-03-15",
        "--d-max",
        "2",
        "--format",
        format,
    ]
}

#[test]
fn run_is_deterministic() {
    let script = golden();
    let script = script.to_str().unwrap();
    let a = hdr(None, &run_args(script, "json"));
    let b = hdr(None, &run_args(script, "json"));
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["facts"].as_array().unwrap().len(), 15);

    let md = hdr(None, &run_args(script, "md"));
    assert_eq!(md.status.code(), Some(0));
    assert!(stdout(&md).starts_with("# Enterprise research report"));
}

#[test]
fn queue_worker_status_report_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("hdr.db");
    let script = golden();
    let script = script.to_str().unwrap();

    let enq = hdr(Some(&db), &["enqueue", "--query", QUERY]);
    assert_eq!(enq.status.code(), Some(0));
    let id = stdout(&enq).trim().to_string();

    let status = hdr(Some(&db), &["status", &id]);
    assert_eq!(stdout(&status).trim(), "Queued, stage 1, attempt 1");

    let worker = hdr(
        Some(&db),
        &[
            "worker",
            "--drain",
            "--script",
            script,
            "--now",
            "2026-03-15",
            "--d-max",
            "2",
        ],
    );
    assert_eq!(
        worker.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&worker.stderr)
    );

    let status = hdr(Some(&db), &["status", &id]);
    assert_eq!(stdout(&status).trim(), "Completed, stage 8, attempt 1");

    let stored = hdr(Some(&db), &["report", &id, "--format", "json"]);
    let direct = hdr(None, &run_args(script, "json"));
    assert_eq!(stored.stdout, direct.stdout);

    let log = stdout(&hdr(Some(&db), &["log", &id]));
    let stages: Vec<&str> = log.lines().map(|l| l.split(' ').next().unwrap()).collect();
    assert_eq!(stages, ["1", "2", "3", "4", "5", "6", "7", "8"]);

    let list = stdout(&hdr(Some(&db), &["queue", "list"]));
    assert!(list.contains("Completed"));

    // The environment variable wins over the flag.
    let other = dir.path().join("other.db");
    let via_env = Command::new(env!("CARGO_BIN_EXE_hdr"))
        .env("HDR_DB_PATH", &db)
        .args(["--db", other.to_str().unwrap(), "status", &id])
        .output()
        .unwrap();
    assert_eq!(
        String::from_utf8(via_env.stdout).unwrap().trim(),
        "Completed, stage 8, attempt 1"
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("hdr.db");
    assert_eq!(hdr(Some(&db), &["status", "42"]).status.code(), Some(3));
    assert_eq!(hdr(Some(&db), &["report", "42"]).status.code(), Some(3));
    assert_eq!(hdr(None, &["run"]).status.code(), Some(64));
    assert_eq!(hdr(None, &["frobnicate"]).status.code(), Some(64));
    assert_eq!(hdr(None, &["--help"]).status.code(), Some(0));
    assert_eq!(
        hdr(Some(&db), &["enqueue", "--query", " "]).status.code(),
        Some(64)
    );

    let script = golden();
    let mut args = run_args(script.to_str().unwrap(), "json");
    args[8] = "0";
    assert_eq!(hdr(None, &args).status.code(), Some(64));
    let weights = [
        "run",
        "--query",
        QUERY,
        "--script",
        script.to_str().unwrap(),
        "--weights",
        "0.5,0.5,0.5",
    ];
    assert_eq!(hdr(None, &weights).status.code(), Some(64));

    let missing = dir.path().join("missing.json");
    assert_eq!(
        hdr(None, &run_args(missing.to_str().unwrap(), "json"))
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn degraded_run_exits_2_but_still_prints_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(golden()).unwrap()).unwrap();
    v["searches"].as_array_mut().unwrap().insert(
        0,
        serde_json::json!({"query_match": "BYD megawatt flash charging", "error": "unavailable", "sticky": true}),
    );
    let script = dir.path().join("degraded.json");
    std::fs::write(&script, v.to_string()).unwrap();
    let out_file = dir.path().join("report.json");
    let mut args = run_args(script.to_str().unwrap(), "json");
    args.extend(["--out", out_file.to_str().unwrap()]);
    let o = hdr(None, &args);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degraded"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_file).unwrap()).unwrap();
    assert_eq!(report["degraded"], true);
}
