use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_entscore"));
    cmd.env_remove("ENTSCORE_LLM_URL").env_remove("ENTSCORE_LLM_TOKEN").env("RUST_LOG", "error");
    cmd
}

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/synthetic_corpus.jsonl")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn compare_happy_path() {
    let c = corpus();
    let out = run(&["compare", "--corpus", c.to_str().unwrap(), "--pair-id", "syn-07-negation", "--method", "entscore"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["id"], "syn-07-negation");
    assert!((v["result"]["score01"].as_f64().unwrap() - 4.0 / 5.5).abs() < 1e-12);
    assert_eq!(v["result"]["classification"]["mismatched"][0], "back muscle spasm");
}

#[test]
fn baseline_methods() {
    let c = corpus();
    for method in ["wfw", "llm", "cosine"] {
        let out = run(&["compare", "--corpus", c.to_str().unwrap(), "--pair-id", "syn-01-identical", "--method", method]);
        assert_eq!(code(&out), 0, "{method}: {}", String::from_utf8_lossy(&out.stderr));
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["result"]["score10"].as_f64(), Some(10.0), "{method}");
    }
}

#[test]
fn usage_errors_exit_1() {
    let out = run(&["compare", "--frobnicate"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    assert_eq!(code(&run(&["transmogrify"])), 1);

    let c = corpus();
    let out = run(&["compare", "--corpus", c.to_str().unwrap(), "--pair-id", "nope"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no pair with id"));

    let out = run(&["compare", "--corpus", "/no/such/corpus.jsonl", "--pair-id", "x"]);
    assert_eq!(code(&out), 1);

    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn config_file_and_flags_layer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("engine.toml");
    std::fs::write(&cfg, "[weights]\nmissing = 4.0\nmismatch = 3.0\n").unwrap();
    let c = corpus();
    let base = ["compare", "--corpus", c.to_str().unwrap(), "--pair-id", "syn-07-negation"];

    let out = bin().args(base).args(["--config", cfg.to_str().unwrap()]).output().unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["weights"]["mismatch"], 3.0);
    assert!((v["result"]["score01"].as_f64().unwrap() - 4.0 / 7.0).abs() < 1e-12);

    let out = bin().args(base).args(["--config", cfg.to_str().unwrap(), "--weights", "mismatch=1"]).output().unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["weights"]["mismatch"], 1.0);
    assert_eq!(v["result"]["weights"]["missing"], 4.0);

    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let out = bin().args(base).args(["--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(code(&out), 1);
}

fn evaluate_into(dir: &Path, extra: &[&str]) -> Output {
    let c = corpus();
    let out = dir.join("summary.json");
    bin()
        .args(["evaluate", "--corpus", c.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn evaluate_writes_summary_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let out = evaluate_into(dir.path(), &["--concurrency", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_file(&dir.path().join("summary.json"));
    assert_eq!(v["pairs_total"], 12);
    assert_eq!(v["pairs_failed"], 0);
    assert_eq!(v["complete"], true);
    assert_eq!(v["summary"]["n"], 12);
    let ids: Vec<&str> = v["pairs"].as_array().unwrap().iter().map(|p| p["id"].as_str().unwrap()).collect();
    assert_eq!(ids[0], "syn-01-identical");
    assert_eq!(ids[11], "syn-12-identical");

    let confusion = std::fs::read_to_string(dir.path().join("summary.confusion.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 12);
    assert!(std::fs::read_to_string(dir.path().join("summary.histogram.svg")).unwrap().starts_with("<svg"));
    assert!(dir.path().join("summary.histogram.csv").is_file());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&evaluate_into(a.path(), &["--concurrency", "1"])), 0);
    assert_eq!(code(&evaluate_into(b.path(), &["--concurrency", "4"])), 0);
    for name in ["summary.json", "summary.confusion.csv", "summary.histogram.csv", "summary.histogram.svg"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }

    let c = corpus();
    let perturb = |dir: &Path| {
        let out = dir.join("neg.jsonl");
        let status = run(&["perturb", "--in", c.to_str().unwrap(), "--mode", "llm", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&status), 0);
        std::fs::read(out).unwrap()
    };
    assert_eq!(perturb(a.path()), perturb(b.path()));
}

#[test]
fn perturb_rule_and_llm_modes_agree_on_structure() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    let out = dir.path().join("neg.jsonl");
    let status = run(&[
        "perturb",
        "--in",
        c.to_str().unwrap(),
        "--mode",
        "rule",
        "--index",
        "1",
        "--with-identical",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&status), 0, "{}", String::from_utf8_lossy(&status.stderr));
    let bytes = std::fs::read(&out).unwrap();
    let pairs = entscore::parse_corpus(&bytes).unwrap();
    assert_eq!(pairs.len(), 24);
    for pair in pairs.chunks(2) {
        assert!(pair[0].id.ends_with("-same"));
        assert_eq!(pair[0].preliminary, pair[0].final_report);
        assert!(pair[1].id.ends_with("-neg"));
        let f = pair[1].final_report.text(entscore::SectionSelector::Both).unwrap();
        let p = pair[1].preliminary.text(entscore::SectionSelector::Both).unwrap();
        assert!(entscore::perturb::verify_single_change(&f, &p).ok, "{f:?} / {p:?}");
    }
}

#[test]
fn visualize_writes_html() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    let out = dir.path().join("pair.html");
    let status = run(&["visualize", "--corpus", c.to_str().unwrap(), "--pair-id", "syn-07-negation", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&status), 0);
    let html = std::fs::read_to_string(&out).unwrap();
    assert!(html.starts_with("<!DOCTYPE html>"));
    assert_eq!(html.matches("ent-mismatched").count(), 4);

    let status = run(&[
        "visualize",
        "--corpus",
        c.to_str().unwrap(),
        "--pair-id",
        "syn-07-negation",
        "--explain",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&status), 0);
    let html = std::fs::read_to_string(&out).unwrap();
    assert!(html.contains("0.73") && html.contains("7.3/10"));
    assert!(html.contains("<h2>Explanation</h2>"));
}

#[test]
fn extract_lists_entities() {
    let out = run(&["extract", "--text", "No back muscle spasm."]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["entities"][0]["normalized"], "back muscle spasm");
    assert_eq!(v["entities"][0]["start"], 3);

    let c = corpus();
    let out = run(&["extract", "--corpus", c.to_str().unwrap(), "--pair-id", "syn-03-identical", "--section", "findings"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);
}

#[test]
fn unreachable_ner_worker_exits_2() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let c = corpus();
    let out = run(&[
        "compare",
        "--corpus",
        c.to_str().unwrap(),
        "--pair-id",
        "syn-01-identical",
        "--extractor",
        &format!("tcp:127.0.0.1:{port}"),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

/// Answers `serve` chat-completion requests, then stops listening.
fn dying_llm_server(serve: usize) -> (String, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        for _ in 0..serve {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let reply = r#"{"choices":[{"message":{"role":"assistant","content":"Score: 7.5, Reasoning: similar findings"}}]}"#;
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    (url, handle)
}

#[test]
fn backend_outage_leaves_partial_results_and_exits_2() {
    let (url, server) = dying_llm_server(3);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("engine.toml");
    std::fs::write(&cfg, "[llm]\nmax_retries = 0\ntimeout_secs = 5\n").unwrap();
    let out = evaluate_into(
        dir.path(),
        &["--config", cfg.to_str().unwrap(), "--llm", &url, "--method", "llm", "--concurrency", "1"],
    );
    server.join().unwrap();
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));

    let v = json_file(&dir.path().join("summary.json"));
    assert_eq!(v["complete"], false);
    assert_eq!(v["pairs_failed"], 9);
    let rows = v["pairs"].as_array().unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows[..3].iter().all(|r| r["score10"] == 7.5));
    assert!(rows[3..].iter().all(|r| r["error"].is_string()));
}

#[test]
fn env_endpoint_is_overridden_by_flag() {
    let c = corpus();
    let out = bin()
        .env("ENTSCORE_LLM_URL", "http://127.0.0.1:1/v1")
        .args(["compare", "--corpus", c.to_str().unwrap(), "--pair-id", "syn-01-identical", "--llm", "mock"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}
