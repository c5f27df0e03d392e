//! Fixture locations and store comparison helpers.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use vulgd_core::graph::{EdgeType, GraphData, NodeLabel};
use vulgd_core::pipeline::{SourceConfig, SourceId};

/// Resolves from any crate in the workspace that includes this module.
pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn eternalblue_sources() -> Vec<SourceConfig> {
    let d = fixtures().join("eternalblue");
    vec![
        SourceConfig::new(SourceId::Nvd, d.join("nvd.jsonl").to_string_lossy()),
        SourceConfig::new(SourceId::Cwe, d.join("cwe.jsonl").to_string_lossy()),
        SourceConfig::new(SourceId::CveDetails, d.join("cvedetails.jsonl").to_string_lossy()),
        SourceConfig::new(SourceId::Exploitdb, d.join("exploitdb.csv").to_string_lossy()),
    ]
}

pub fn source(id: SourceId, path: &Path) -> SourceConfig {
    SourceConfig::new(id, path.to_string_lossy())
}

/// Everything observable about a graph, independent of internal handles.
#[derive(Debug, PartialEq, Eq)]
pub struct Fingerprint {
    pub label_counts: BTreeMap<NodeLabel, usize>,
    pub type_counts: BTreeMap<EdgeType, usize>,
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<String>,
}

pub fn fingerprint(g: &GraphData) -> Fingerprint {
    Fingerprint {
        label_counts: NodeLabel::ALL.iter().map(|l| (*l, g.count_label(*l))).collect(),
        type_counts: EdgeType::ALL.iter().map(|t| (*t, g.count_type(*t))).collect(),
        nodes: g.nodes().map(|n| format!("{}|{}|{:?}", n.label, n.key, n.props)).collect(),
        edges: g
            .edges()
            .map(|e| {
                let s = g.node(e.src).unwrap();
                let d = g.node(e.dst).unwrap();
                format!("{}|{}:{}|{}:{}|{:?}", e.edge_type, s.label, s.key, d.label, d.key, e.props)
            })
            .collect(),
    }
}

const WORDS: &[&str] = &[
    "buffer", "overflow", "remote", "attacker", "execute", "arbitrary", "code", "crafted", "packet",
    "kernel", "driver", "privilege", "escalation", "sql", "injection", "parameter", "cross", "site",
    "scripting", "web", "interface", "denial", "service", "memory", "corruption", "heap", "use",
    "after", "free", "authentication", "bypass", "path", "traversal", "file", "upload", "xml",
    "external", "entity", "race", "condition", "integer", "underflow", "null", "pointer", "smb",
    "tls", "certificate", "validation", "session", "token", "cookie", "csrf", "firmware", "router",
];

/// Pseudo-random vulnerability descriptions, reproducible per seed.
pub fn descriptions(n: usize, seed: u64) -> Vec<String> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(6..16);
            (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
        })
        .collect()
}

/// NVD-style JSONL with `n` CVEs of `year`, numbered from `start`.
pub fn synthetic_nvd(year: i32, start: usize, n: usize, seed: u64) -> String {
    descriptions(n, seed)
        .iter()
        .enumerate()
        .map(|(i, desc)| {
            let id = format!("CVE-{year}-{:05}", start + i);
            let day = 1 + (i % 28);
            serde_json::json!({
                "cveID": id,
                "description": desc,
                "published": format!("{year}-02-{day:02}T00:00:00Z"),
                "lastModified": format!("{year}-03-{day:02}T00:00:00Z"),
                "cweIDs": ["CWE-20"],
                "affectedProducts": [{"vendorName": "Acme", "productName": format!("Box {}", i % 7)}],
                "referenceUrls": [format!("https://vendor{}.example/advisory", i % 5)],
            })
            .to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// A store holding only vulnerability nodes with synthetic descriptions.
pub fn vulnerability_store(year: i32, n: usize, seed: u64) -> vulgd_core::graph::GraphStore {
    use vulgd_core::graph::{props, GraphStore};
    let store = GraphStore::in_memory();
    let mut batch = store.begin();
    for (i, desc) in descriptions(n, seed).into_iter().enumerate() {
        let id = format!("CVE-{year}-{i:05}");
        batch
            .merge_node(NodeLabel::Vulnerability, &props([("cveID", id.as_str())]), &props([("description", desc.as_str())]))
            .unwrap();
    }
    batch.commit().unwrap();
    store
}
