mod support;

use support::corpus::{eternalblue_sources, fixtures, source};
use vulgd_core::export::*;
use vulgd_core::graph::{EdgeType, GraphStore, NodeLabel};
use vulgd_core::pipeline::{run_full, PipelineRunState, RunContext, SourceId};

/// The case-study corpus with the ten extra CVEs folded into one NVD feed
/// (the watermark is kept per source, so two NVD feeds would shadow).
fn loaded() -> GraphStore {
    let tmp = tempfile::tempdir().unwrap();
    let store = GraphStore::in_memory();
    let feed = tmp.path().join("nvd.jsonl");
    let mut text = std::fs::read_to_string(fixtures().join("eternalblue/nvd.jsonl")).unwrap();
    text.push('\n');
    text.push_str(&std::fs::read_to_string(fixtures().join("nvd10/nvd.jsonl")).unwrap());
    std::fs::write(&feed, text).unwrap();
    let mut sources = eternalblue_sources();
    sources[0] = source(SourceId::Nvd, &feed);
    run_full(&sources, &mut PipelineRunState::default(), &store, &mut RunContext::new(tmp.path()), None).unwrap();
    store
}

#[test]
fn node_csv_round_trips() {
    let store = loaded();
    let props = parse_props(&["cveID,description,v2severity,v3exploitabilityScore"]).unwrap();
    let out = export_nodes(&store.view(), NodeLabel::Vulnerability, &props, ExportFormat::Csv).unwrap();
    let mut r = csv::Reader::from_reader(&out[..]);
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), props);
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), store.count(NodeLabel::Vulnerability));
    let ids: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    let eb = rows.iter().find(|r| &r[0] == "CVE-2017-0144").unwrap();
    assert_eq!(&eb[2], "HIGH");
    assert_eq!(&eb[3], "2.2");
}

#[test]
fn node_json_uses_nulls_for_missing() {
    let store = loaded();
    let props = vec!["name".to_string(), "missing".to_string()];
    let out = export_nodes(&store.view(), NodeLabel::Author, &props, ExportFormat::Json).unwrap();
    let v: Vec<serde_json::Value> = serde_json::from_slice(&out).unwrap();
    assert_eq!(v.len(), store.count(NodeLabel::Author));
    assert!(v.iter().all(|o| o["missing"].is_null() && o["name"].is_string()));
}

#[test]
fn exploits_relationships() {
    let store = loaded();
    let out = export_relationships(&store.view(), EdgeType::EXPLOITS, &[], ExportFormat::Csv).unwrap();
    let mut r = csv::Reader::from_reader(&out[..]);
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| &r[2] == "Vulnerability" && &r[3] == "CVE-2017-0144"));
    let mut sources: Vec<&str> = rows.iter().map(|r| &r[1]).collect();
    sources.sort();
    assert_eq!(sources, ["41891", "41987", "42030", "42031"]);

    let out = export_relationships(&store.view(), EdgeType::BELONGS_TO, &[], ExportFormat::Json).unwrap();
    let v: Vec<serde_json::Value> = serde_json::from_slice(&out).unwrap();
    assert!(v.iter().any(|o| o["source_key"]["name"] == "windows_7" && o["target_key"]["name"] == "microsoft"));
}

#[test]
fn stats_shape() {
    let store = loaded();
    let s = graph_stats(&store.view());
    assert_eq!(s.nodes.len(), 7);
    assert_eq!(s.relationships.len(), 6);
    assert_eq!(s.nodes["Exploit"], 4);
    assert_eq!(s.cves_per_year.values().sum::<usize>(), store.count(NodeLabel::Vulnerability));
    // years counted straight from the fixture files
    let mut want = std::collections::BTreeMap::new();
    for f in ["eternalblue/nvd.jsonl", "nvd10/nvd.jsonl"] {
        for line in std::fs::read_to_string(fixtures().join(f)).unwrap().lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let y: i32 = v["cveID"].as_str().unwrap()[4..8].parse().unwrap();
            *want.entry(y).or_insert(0) += 1;
        }
    }
    assert_eq!(s.cves_per_year, want);
    let text = s.to_string();
    assert!(text.contains("Vulnerability") && text.contains("WRITES") && text.contains("2017"));
}
