//! Mapping from canonical records to graph merges.
//!
//! A record is applied only if none of its merges would be rejected, so a
//! bad record never leaves half its nodes behind in the batch.

use serde::{Deserialize, Serialize};

use crate::graph::{props, EdgeType, GraphData, GraphError, NodeKey, NodeLabel, Props, Value, WriteBatch};
use crate::ingest::{CanonicalVulnRecord, EnrichmentRecord, ExploitRecord, ProductRef, WeaknessRecord};

/// A cross-source reference whose target CVE is not in the graph yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Deferred {
    ExploitLink {
        #[serde(rename = "exploitID")]
        exploit_id: String,
        author: String,
        #[serde(rename = "cveID")]
        cve_id: String,
    },
    Enrichment(EnrichmentRecord),
}

impl Deferred {
    pub fn cve_id(&self) -> &str {
        match self {
            Deferred::ExploitLink { cve_id, .. } => cve_id,
            Deferred::Enrichment(r) => &r.cve_id,
        }
    }

    /// Items with the same identity replace each other in the queue.
    fn same_slot(&self, other: &Deferred) -> bool {
        match (self, other) {
            (
                Deferred::ExploitLink { exploit_id: a, cve_id: c, .. },
                Deferred::ExploitLink { exploit_id: b, cve_id: d, .. },
            ) => a == b && c == d,
            (Deferred::Enrichment(a), Deferred::Enrichment(b)) => a.cve_id == b.cve_id,
            _ => false,
        }
    }
}

/// Add to the queue, replacing an item with the same identity.
pub fn enqueue(queue: &mut Vec<Deferred>, item: Deferred) {
    match queue.iter_mut().find(|q| q.same_slot(&item)) {
        Some(slot) => *slot = item,
        None => queue.push(item),
    }
}

fn key1(label: NodeLabel, v: &str) -> Props {
    props([(label.key_properties()[0], v)])
}

fn product_key(p: &ProductRef) -> Props {
    props([("name", p.product_name.as_str()), ("vendorName", p.vendor_name.as_str())])
}

/// Reject a node merge that would overwrite a property with a different
/// type, checking against the batch state and earlier merges of the same
/// record.
fn check_node(data: &GraphData, pending: &mut Vec<(NodeLabel, NodeKey, Props)>, label: NodeLabel, key: &Props, p: &Props) -> Result<(), String> {
    let node_key = crate::graph::key_from_props(label, key).map_err(|e| e.to_string())?;
    for (name, v) in p {
        if let Value::Float(f) = v {
            if !f.is_finite() {
                return Err(format!("{label}.{name}: non-finite number"));
            }
        }
        let existing = data
            .find(label, &node_key)
            .and_then(|n| n.props.get(name))
            .or_else(|| {
                pending
                    .iter()
                    .rev()
                    .find(|(l, k, _)| *l == label && *k == node_key)
                    .and_then(|(_, _, pp)| pp.get(name))
            });
        if let Some(old) = existing {
            if old.kind() != v.kind() {
                return Err(format!("{label} {node_key}: {name} is {}, got {}", old.kind(), v.kind()));
            }
        }
    }
    pending.push((label, node_key, p.clone()));
    Ok(())
}

/// Planned merges for one record.
#[derive(Default)]
struct Plan {
    nodes: Vec<(NodeLabel, Props, Props)>,
    edges: Vec<(EdgeType, (NodeLabel, Props), (NodeLabel, Props))>,
}

impl Plan {
    fn node(&mut self, label: NodeLabel, key: Props, p: Props) -> (NodeLabel, Props) {
        self.nodes.push((label, key.clone(), p));
        (label, key)
    }

    fn edge(&mut self, t: EdgeType, src: (NodeLabel, Props), dst: (NodeLabel, Props)) {
        self.edges.push((t, src, dst));
    }

    fn apply(self, batch: &mut WriteBatch<'_>) -> Result<(), String> {
        let mut pending = Vec::new();
        for (label, key, p) in &self.nodes {
            check_node(batch.data(), &mut pending, *label, key, p)?;
        }
        let resolve = |batch: &WriteBatch<'_>, (label, key): &(NodeLabel, Props)| -> Result<crate::graph::NodeId, GraphError> {
            let k = crate::graph::key_from_props(*label, key)?;
            batch
                .find(*label, &k)
                .ok_or_else(|| GraphError::KeyNotFound(format!("{label} {k}")))
        };
        let go = |batch: &mut WriteBatch<'_>| -> Result<(), GraphError> {
            for (label, key, p) in &self.nodes {
                batch.merge_node(*label, key, p)?;
            }
            for (t, src, dst) in &self.edges {
                let s = resolve(batch, src)?;
                let d = resolve(batch, dst)?;
                batch.merge_edge(*t, s, d, &Props::new())?;
            }
            Ok(())
        };
        go(batch).map_err(|e| e.to_string())
    }
}

fn has_cve(data: &GraphData, cve: &str) -> bool {
    data.find(NodeLabel::Vulnerability, &NodeKey::single(cve)).is_some()
}

fn product_nodes(plan: &mut Plan, v: &(NodeLabel, Props), products: &[ProductRef]) {
    for p in products {
        let prod = plan.node(NodeLabel::Product, product_key(p), Props::new());
        let vendor = plan.node(NodeLabel::Vendor, key1(NodeLabel::Vendor, &p.vendor_name), Props::new());
        plan.edge(EdgeType::AFFECTS, v.clone(), prod.clone());
        plan.edge(EdgeType::BELONGS_TO, prod, vendor);
    }
}

pub fn load_vulnerability(batch: &mut WriteBatch<'_>, r: &CanonicalVulnRecord) -> Result<(), String> {
    let mut plan = Plan::default();
    let mut p = props([
        ("description", Value::from(r.description.as_str())),
        ("published", Value::from(r.published.to_rfc3339())),
        ("lastModified", Value::from(r.last_modified.to_rfc3339())),
    ]);
    if let Some(s) = r.cvss_v2_severity {
        p.insert("v2severity".into(), Value::from(s.as_str()));
    }
    if let Some(s) = r.cvss_v3_exploitability_score {
        p.insert("v3exploitabilityScore".into(), Value::Float(s));
    }
    let v = plan.node(NodeLabel::Vulnerability, key1(NodeLabel::Vulnerability, &r.cve_id), p);
    for cwe in &r.cwe_ids {
        let w = plan.node(NodeLabel::Weakness, key1(NodeLabel::Weakness, cwe), Props::new());
        plan.edge(EdgeType::EXAMPLE_OF, v.clone(), w);
    }
    product_nodes(&mut plan, &v, &r.affected_products);
    for url in &r.reference_urls {
        if let Some(host) = crate::ingest::url_host(url) {
            let d = plan.node(NodeLabel::Domain, key1(NodeLabel::Domain, &host), Props::new());
            plan.edge(EdgeType::REFERS_TO, v.clone(), d);
        }
    }
    plan.apply(batch)
}

pub fn load_weakness(batch: &mut WriteBatch<'_>, r: &WeaknessRecord) -> Result<(), String> {
    let mut plan = Plan::default();
    let mut p = props([("name", r.name.as_str())]);
    if !r.description.is_empty() {
        p.insert("description".into(), Value::from(r.description.as_str()));
    }
    plan.node(NodeLabel::Weakness, key1(NodeLabel::Weakness, &r.cwe_id), p);
    plan.apply(batch)
}

/// Merge an exploit and its author. Links to CVEs not yet in the graph are
/// returned as deferred items.
pub fn load_exploit(batch: &mut WriteBatch<'_>, r: &ExploitRecord) -> Result<Vec<Deferred>, String> {
    let mut plan = Plan::default();
    let mut p = props([("title", r.title.as_str()), ("type", r.exploit_type.as_str())]);
    if let Some(u) = &r.source_url {
        p.insert("sourceUrl".into(), Value::from(u.as_str()));
    }
    let ex = plan.node(NodeLabel::Exploit, key1(NodeLabel::Exploit, &r.exploit_id), p);
    let author = plan.node(NodeLabel::Author, key1(NodeLabel::Author, &r.author_name), Props::new());
    plan.edge(EdgeType::WRITES, author.clone(), ex.clone());
    let mut deferred = Vec::new();
    for cve in &r.cve_ids {
        if has_cve(batch.data(), cve) {
            let v = (NodeLabel::Vulnerability, key1(NodeLabel::Vulnerability, cve));
            plan.edge(EdgeType::EXPLOITS, ex.clone(), v.clone());
            plan.edge(EdgeType::WRITES, author.clone(), v);
        } else {
            deferred.push(Deferred::ExploitLink {
                exploit_id: r.exploit_id.clone(),
                author: r.author_name.clone(),
                cve_id: cve.clone(),
            });
        }
    }
    plan.apply(batch)?;
    Ok(deferred)
}

/// Apply an enrichment, or hand it back if its CVE is missing.
pub fn load_enrichment(batch: &mut WriteBatch<'_>, r: &EnrichmentRecord) -> Result<Option<Deferred>, String> {
    if !has_cve(batch.data(), &r.cve_id) {
        return Ok(Some(Deferred::Enrichment(r.clone())));
    }
    let mut plan = Plan::default();
    let v = plan.node(NodeLabel::Vulnerability, key1(NodeLabel::Vulnerability, &r.cve_id), r.extra_props.clone());
    product_nodes(&mut plan, &v, &r.product_mappings);
    for host in &r.reference_domains {
        let d = plan.node(NodeLabel::Domain, key1(NodeLabel::Domain, host), Props::new());
        plan.edge(EdgeType::REFERS_TO, v.clone(), d);
    }
    plan.apply(batch)?;
    Ok(None)
}

/// Try every queued item whose CVE now exists. Returns how many resolved;
/// items that fail for other reasons stay queued with the error reported.
pub fn resolve_deferred(batch: &mut WriteBatch<'_>, queue: &mut Vec<Deferred>, errors: &mut Vec<String>) -> usize {
    let mut resolved = 0;
    let mut keep = Vec::with_capacity(queue.len());
    for item in queue.drain(..) {
        if !has_cve(batch.data(), item.cve_id()) {
            keep.push(item);
            continue;
        }
        let result = match &item {
            Deferred::ExploitLink { exploit_id, author, cve_id } => {
                let mut plan = Plan::default();
                let ex = (NodeLabel::Exploit, key1(NodeLabel::Exploit, exploit_id));
                let a = (NodeLabel::Author, key1(NodeLabel::Author, author));
                let v = (NodeLabel::Vulnerability, key1(NodeLabel::Vulnerability, cve_id));
                plan.edge(EdgeType::EXPLOITS, ex, v.clone());
                plan.edge(EdgeType::WRITES, a, v);
                plan.apply(batch)
            }
            Deferred::Enrichment(r) => load_enrichment(batch, r).map(|_| ()),
        };
        match result {
            Ok(()) => resolved += 1,
            Err(e) => {
                errors.push(format!("deferred {}: {e}", item.cve_id()));
                keep.push(item);
            }
        }
    }
    *queue = keep;
    resolved
}
