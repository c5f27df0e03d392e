use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vulgd_core::embedder::{ModelId, TierStore};
use vulgd_core::export::{export_nodes, export_relationships, graph_stats, ExportFormat};
use vulgd_core::graph::{EdgeType, GraphStore, NodeLabel};
use vulgd_core::query::run_query;

fn fixtures(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn vulgd(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vulgd"))
        .arg("--store-path")
        .arg(store)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Store loaded from both fixture sets.
fn loaded() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    stdout(&vulgd(tmp.path(), &["-q", "--fixtures", fixtures("eternalblue").to_str().unwrap(), "pipeline-run"]));
    stdout(&vulgd(tmp.path(), &["-q", "--fixtures", fixtures("nvd10").to_str().unwrap(), "pipeline-run"]));
    tmp
}

fn open(dir: &Path) -> GraphStore {
    GraphStore::open(dir.join("graph")).unwrap()
}

#[test]
fn query_prints_one_line_per_row() {
    let tmp = loaded();
    let q = "MATCH (n:Vulnerability) RETURN n.cveID LIMIT 3";
    let out = stdout(&vulgd(tmp.path(), &["-q", "query", q]));
    let want: Vec<String> = run_query(q, &open(tmp.path()).view()).unwrap().rows.iter().map(|r| r[0].render()).collect();
    assert_eq!(out.lines().collect::<Vec<_>>(), want);
    assert_eq!(want.len(), 3);

    let with_header = stdout(&vulgd(tmp.path(), &["-q", "query", "--header", q]));
    assert_eq!(with_header.lines().next(), Some("n.cveID"));
}

#[test]
fn json_query_matches_engine() {
    let tmp = loaded();
    let q = "MATCH (ex:Exploit)-[:EXPLOITS]->(v:Vulnerability) RETURN ex, v.cveID";
    let out = stdout(&vulgd(tmp.path(), &["-q", "query", "--format", "json", q]));
    let want = serde_json::to_value(run_query(q, &open(tmp.path()).view()).unwrap()).unwrap();
    assert_eq!(serde_json::from_str::<serde_json::Value>(&out).unwrap(), want);
}

#[test]
fn stats_match_library() {
    let tmp = loaded();
    let out = stdout(&vulgd(tmp.path(), &["-q", "stats"]));
    let s = graph_stats(&open(tmp.path()).view());
    assert_eq!(out, s.to_string());
    assert_eq!(s.nodes["Vulnerability"], 11);
    assert_eq!(s.cves_per_year.values().sum::<usize>(), 11);
    let json = stdout(&vulgd(tmp.path(), &["-q", "stats", "--format", "json"]));
    assert_eq!(serde_json::from_str::<serde_json::Value>(&json).unwrap(), serde_json::to_value(&s).unwrap());
}

#[test]
fn exports_match_library() {
    let tmp = loaded();
    let out = vulgd(tmp.path(), &["-q", "export", "--label", "Vulnerability", "--props", "cveID,v2severity", "--props", "description"]);
    let g = open(tmp.path()).view();
    let props = ["cveID", "v2severity", "description"].map(String::from);
    assert_eq!(stdout(&out).into_bytes(), export_nodes(&g, NodeLabel::Vulnerability, &props, ExportFormat::Csv).unwrap());

    let file = tmp.path().join("writes.json");
    stdout(&vulgd(tmp.path(), &["-q", "export", "--rel-type", "WRITES", "--format", "json", "-o", file.to_str().unwrap()]));
    assert_eq!(std::fs::read(&file).unwrap(), export_relationships(&g, EdgeType::WRITES, &[], ExportFormat::Json).unwrap());
}

#[test]
fn pipeline_stdout_is_deterministic() {
    let runs: Vec<String> = (0..2)
        .map(|_| {
            let tmp = tempfile::tempdir().unwrap();
            stdout(&vulgd(tmp.path(), &["--fixtures", fixtures("eternalblue").to_str().unwrap(), "pipeline-run"]))
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0].lines().count(), 5);
    for line in runs[0].lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["outcome"], "SUCCESS");
        assert!(v.get("duration_ms").is_none());
    }
}

#[test]
fn ingest_runs_one_source() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures("eternalblue");
    let out = stdout(&vulgd(tmp.path(), &["-q", "--fixtures", fx.to_str().unwrap(), "ingest", "--source", "exploitdb"]));
    let report: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(report["source"], "EXPLOITDB");
    assert_eq!(report["counts"]["processed"], 4);
    let store = open(tmp.path());
    assert_eq!(store.count(NodeLabel::Exploit), 4);
    assert_eq!(store.count(NodeLabel::Vulnerability), 0);
}

#[test]
fn embed_build_writes_tiers() {
    let tmp = loaded();
    let out = stdout(&vulgd(tmp.path(), &["-q", "embed-build", "--year", "2019", "--rebuild"]));
    let report: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(report["year"], 2019);
    assert_eq!(report["written"], true);
    let set = TierStore::new(tmp.path().join("embeddings")).load(2019, ModelId::HashDefault).unwrap();
    assert_eq!(set.rows(), 4);
    assert_eq!(set.alpha.dim, report["alpha_dim"].as_u64().unwrap() as usize);
}

#[test]
fn embed_bench_small_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stdout(&vulgd(tmp.path(), &["-q", "embed-bench", "--dims", "16,32,64", "--rows", "300"]));
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("dim,storage_mb,time_ms,peak_mem_mb"));
    let dims: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(dims, ["16", "32", "64"]);
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["query"], &["stats", "--bogus"], &["export", "--props", "x"], &["schedule", "--interval", "5x"]] {
        let out = vulgd(tmp.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_one_with_a_single_line() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["-q", "query", "MATCH (n) DETACH DELETE n"][..],
        &["-q", "export", "--label", "Gadget", "--props", "x"],
        &["-q", "pipeline-run"],
        &["-q", "embed-build", "--year", "1999"],
        &["-q", "schedule", "--interval", "30s"],
        &["-q", "--fixtures", "/nonexistent", "pipeline-run"],
    ] {
        let out = vulgd(tmp.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("error: "));
    }
}

#[test]
fn serve_with_scheduler_loads_and_answers() {
    use std::io::{Read, Write};
    use std::net::{TcpListener, TcpStream};
    use std::time::{Duration, Instant};

    let tmp = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let fx = fixtures("eternalblue");
    let mut child = Command::new(env!("CARGO_BIN_EXE_vulgd"))
        .arg("--store-path")
        .arg(tmp.path())
        .args(["-q", "--fixtures", fx.to_str().unwrap(), "serve", "--schedule", "--interval", "1h", "--port", &port.to_string()])
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let body = r#"{"query":"MATCH (e:Exploit) RETURN e.exploitID"}"#;
    let deadline = Instant::now() + Duration::from_secs(20);
    let rows = loop {
        assert!(Instant::now() < deadline, "no scheduled load observed");
        std::thread::sleep(Duration::from_millis(100));
        let Ok(mut s) = TcpStream::connect(("127.0.0.1", port)) else { continue };
        let req = format!(
            "POST /api/v1/cypher_query HTTP/1.1\r\nHost: x\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
            body.len()
        );
        s.write_all(req.as_bytes()).unwrap();
        let mut text = String::new();
        s.read_to_string(&mut text).unwrap();
        let json: serde_json::Value = serde_json::from_str(text.split_once("\r\n\r\n").unwrap().1).unwrap();
        if json["row_count"] == 4 {
            break json["rows"].clone();
        }
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 4);
}
