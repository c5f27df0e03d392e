//! Node and relationship downloads, plus corpus statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::graph::{key_props, EdgeType, GraphData, Node, NodeLabel, Value};
use crate::ingest::cve_year;

#[derive(Debug, Error, PartialEq)]
pub enum ExportError {
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("unknown relationship type {0:?}")]
    UnknownType(String),
    #[error("unsupported format {0:?}, expected csv or json")]
    UnsupportedFormat(String),
    #[error("no properties requested")]
    NoProps,
    #[error("invalid property name {0:?}")]
    BadProp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl ExportFormat {
    pub fn content_type(self) -> &'static str {
        match self {
            ExportFormat::Csv => "text/csv; charset=utf-8",
            ExportFormat::Json => "application/json",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            _ => Err(ExportError::UnsupportedFormat(s.to_string())),
        }
    }
}

pub fn parse_label(s: &str) -> Result<NodeLabel, ExportError> {
    s.parse().map_err(|_| ExportError::UnknownLabel(s.to_string()))
}

pub fn parse_edge_type(s: &str) -> Result<EdgeType, ExportError> {
    s.parse().map_err(|_| ExportError::UnknownType(s.to_string()))
}

/// Split repeated and comma-separated property lists into names.
pub fn parse_props<S: AsRef<str>>(raw: &[S]) -> Result<Vec<String>, ExportError> {
    let mut out: Vec<String> = Vec::new();
    for chunk in raw {
        for name in chunk.as_ref().split(',').map(str::trim).filter(|n| !n.is_empty()) {
            let valid = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !valid {
                return Err(ExportError::BadProp(name.to_string()));
            }
            if !out.iter().any(|n| n == name) {
                out.push(name.to_string());
            }
        }
    }
    Ok(out)
}

fn write_csv(header: &[String], rows: &[Vec<Option<&Value>>], lead: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for (i, row) in rows.iter().enumerate() {
        let mut rec: Vec<String> = lead.get(i).cloned().unwrap_or_default();
        rec.extend(row.iter().map(|v| v.map(Value::render).unwrap_or_default()));
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("flush")
}

fn to_json(v: Option<&Value>) -> Json {
    v.map(|v| serde_json::to_value(v).expect("values serialize"))
        .unwrap_or(Json::Null)
}

/// One row per node of `label`, in ascending key order. Missing properties
/// are empty in csv and null in json.
pub fn export_nodes(
    graph: &GraphData,
    label: NodeLabel,
    props: &[String],
    format: ExportFormat,
) -> Result<Vec<u8>, ExportError> {
    if props.is_empty() {
        return Err(ExportError::NoProps);
    }
    let nodes: Vec<&Node> = graph.nodes_by_label(label).collect();
    let rows: Vec<Vec<Option<&Value>>> = nodes
        .iter()
        .map(|n| props.iter().map(|p| n.get(p)).collect())
        .collect();
    Ok(match format {
        ExportFormat::Csv => write_csv(props, &rows, &[]),
        ExportFormat::Json => {
            let arr: Vec<Json> = rows
                .iter()
                .map(|r| {
                    let m: Map<String, Json> = props.iter().cloned().zip(r.iter().map(|v| to_json(*v))).collect();
                    Json::Object(m)
                })
                .collect();
            serde_json::to_vec(&arr).expect("json serializes")
        }
    })
}

pub const REL_COLUMNS: [&str; 4] = ["source_label", "source_key", "target_label", "target_key"];

/// One row per edge of `edge_type`, ordered by (source key, target key).
/// Composite keys are joined with `|` in csv and kept as objects in json.
pub fn export_relationships(
    graph: &GraphData,
    edge_type: EdgeType,
    props: &[String],
    format: ExportFormat,
) -> Result<Vec<u8>, ExportError> {
    let edges = graph.edges_by_type(edge_type);
    let ends: Vec<(&Node, &Node)> = edges
        .iter()
        .map(|e| (graph.node(e.src).expect("edge source"), graph.node(e.dst).expect("edge target")))
        .collect();
    let rows: Vec<Vec<Option<&Value>>> = edges
        .iter()
        .map(|e| props.iter().map(|p| e.props.get(p)).collect())
        .collect();
    Ok(match format {
        ExportFormat::Csv => {
            let header: Vec<String> = REL_COLUMNS.iter().map(|c| c.to_string()).chain(props.iter().cloned()).collect();
            let lead: Vec<Vec<String>> = ends
                .iter()
                .map(|(s, d)| {
                    vec![
                        s.label.to_string(),
                        s.key.parts().join("|"),
                        d.label.to_string(),
                        d.key.parts().join("|"),
                    ]
                })
                .collect();
            write_csv(&header, &rows, &lead)
        }
        ExportFormat::Json => {
            let key = |n: &Node| serde_json::to_value(key_props(n.label, &n.key)).expect("json");
            let arr: Vec<Json> = ends
                .iter()
                .zip(&rows)
                .map(|((s, d), r)| {
                    let mut m = Map::new();
                    m.insert("source_label".into(), s.label.as_str().into());
                    m.insert("source_key".into(), key(s));
                    m.insert("target_label".into(), d.label.as_str().into());
                    m.insert("target_key".into(), key(d));
                    for (p, v) in props.iter().zip(r) {
                        m.insert(p.clone(), to_json(*v));
                    }
                    Json::Object(m)
                })
                .collect();
            serde_json::to_vec(&arr).expect("json serializes")
        }
    })
}

/// Per-label and per-type counts plus CVEs per year (by cveID).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub nodes: BTreeMap<String, usize>,
    pub relationships: BTreeMap<String, usize>,
    pub cves_per_year: BTreeMap<i32, usize>,
}

pub fn graph_stats(graph: &GraphData) -> GraphStats {
    let mut cves_per_year = BTreeMap::new();
    for n in graph.nodes_by_label(NodeLabel::Vulnerability) {
        if let Some(y) = n.get("cveID").and_then(Value::as_str).and_then(cve_year) {
            *cves_per_year.entry(y).or_insert(0) += 1;
        }
    }
    GraphStats {
        nodes: NodeLabel::ALL.iter().map(|l| (l.to_string(), graph.count_label(*l))).collect(),
        relationships: EdgeType::ALL.iter().map(|t| (t.to_string(), graph.count_type(*t))).collect(),
        cves_per_year,
    }
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:>10}", "Node type", "Count")?;
        for l in NodeLabel::ALL {
            writeln!(f, "{:<16} {:>10}", l.as_str(), self.nodes[l.as_str()])?;
        }
        writeln!(f)?;
        writeln!(f, "{:<16} {:>10}", "Relationship", "Count")?;
        for t in EdgeType::ALL {
            writeln!(f, "{:<16} {:>10}", t.as_str(), self.relationships[t.as_str()])?;
        }
        writeln!(f)?;
        writeln!(f, "{:<6} {:>10}", "Year", "CVEs")?;
        for (y, c) in &self.cves_per_year {
            writeln!(f, "{y:<6} {c:>10}")?;
        }
        Ok(())
    }
}
