use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::schema::{EdgeType, NodeKey, NodeLabel};
use super::value::{Props, PropertyFilter, Value};
use super::GraphError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub label: NodeLabel,
    pub key: NodeKey,
    /// Includes the key properties.
    pub props: Props,
}

impl Node {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.props.get(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub edge_type: EdgeType,
    pub src: NodeId,
    pub dst: NodeId,
    pub props: Props,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeOutcome {
    Created,
    Updated,
    Unchanged,
}

impl MergeOutcome {
    pub fn changed(self) -> bool {
        self != MergeOutcome::Unchanged
    }
}

/// Extract and validate the identity of a node from its key map.
pub fn key_from_props(label: NodeLabel, key: &Props) -> Result<NodeKey, GraphError> {
    let names = label.key_properties();
    if key.len() != names.len() {
        let got: Vec<&str> = key.keys().map(String::as_str).collect();
        return Err(GraphError::Schema(format!(
            "{label} key must be exactly {names:?}, got {got:?}"
        )));
    }
    let mut parts = Vec::with_capacity(names.len());
    for name in names {
        match key.get(*name) {
            Some(Value::Str(s)) if !s.trim().is_empty() => parts.push(s.clone()),
            Some(Value::Str(_)) => {
                return Err(GraphError::Schema(format!("{label}.{name}: empty key")))
            }
            Some(other) => {
                return Err(GraphError::Schema(format!(
                    "{label}.{name}: key must be a string, got {}",
                    other.kind()
                )))
            }
            None => {
                return Err(GraphError::Schema(format!(
                    "{label}: missing key property {name}"
                )))
            }
        }
    }
    Ok(NodeKey(parts))
}

/// Key map for a node identity, the inverse of [`key_from_props`].
pub fn key_props(label: NodeLabel, key: &NodeKey) -> Props {
    label
        .key_properties()
        .iter()
        .zip(key.parts())
        .map(|(n, v)| (n.to_string(), Value::Str(v.clone())))
        .collect()
}

fn check_overwrite(
    existing: &Props,
    incoming: &Props,
    what: &dyn Fn() -> String,
) -> Result<bool, GraphError> {
    let mut changed = false;
    for (name, value) in incoming {
        value.check_supported(name)?;
        if let Some(old) = existing.get(name) {
            if old.kind() != value.kind() {
                return Err(GraphError::Schema(format!(
                    "{}.{name}: cannot overwrite {} with {}",
                    what(),
                    old.kind(),
                    value.kind()
                )));
            }
            if old != value {
                changed = true;
            }
        } else {
            changed = true;
        }
    }
    Ok(changed)
}

/// In-memory graph contents. Nodes and edges are never removed, so handles
/// are dense indexes.
#[derive(Debug, Clone, Default)]
pub struct GraphData {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    key_index: HashMap<NodeLabel, BTreeMap<NodeKey, NodeId>>,
    edge_index: HashMap<(EdgeType, NodeId, NodeId), EdgeId>,
    type_index: HashMap<EdgeType, Vec<EdgeId>>,
    out_adj: Vec<Vec<EdgeId>>,
    in_adj: Vec<Vec<EdgeId>>,
}

impl GraphData {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0 as usize)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(id.0 as usize)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn count_label(&self, label: NodeLabel) -> usize {
        self.key_index.get(&label).map_or(0, BTreeMap::len)
    }

    pub fn count_type(&self, edge_type: EdgeType) -> usize {
        self.type_index.get(&edge_type).map_or(0, Vec::len)
    }

    pub fn find(&self, label: NodeLabel, key: &NodeKey) -> Option<&Node> {
        let id = self.key_index.get(&label)?.get(key)?;
        self.node(*id)
    }

    pub fn find_edge(&self, edge_type: EdgeType, src: NodeId, dst: NodeId) -> Option<&Edge> {
        self.edge_index
            .get(&(edge_type, src, dst))
            .and_then(|id| self.edge(*id))
    }

    /// Nodes of a label in ascending key order.
    pub fn nodes_by_label(&self, label: NodeLabel) -> impl Iterator<Item = &Node> {
        self.key_index
            .get(&label)
            .into_iter()
            .flat_map(|m| m.values())
            .map(|id| &self.nodes[id.0 as usize])
    }

    /// Edges of a type, ordered by (source key, target key).
    pub fn edges_by_type(&self, edge_type: EdgeType) -> Vec<&Edge> {
        let mut out: Vec<&Edge> = self
            .type_index
            .get(&edge_type)
            .into_iter()
            .flatten()
            .map(|id| &self.edges[id.0 as usize])
            .collect();
        out.sort_by(|a, b| {
            let ka = (&self.nodes[a.src.0 as usize].key, &self.nodes[a.dst.0 as usize].key);
            let kb = (&self.nodes[b.src.0 as usize].key, &self.nodes[b.dst.0 as usize].key);
            ka.cmp(&kb)
        });
        out
    }

    pub fn outgoing(&self, id: NodeId) -> impl Iterator<Item = &Edge> {
        self.out_adj
            .get(id.0 as usize)
            .into_iter()
            .flatten()
            .map(|e| &self.edges[e.0 as usize])
    }

    pub fn incoming(&self, id: NodeId) -> impl Iterator<Item = &Edge> {
        self.in_adj
            .get(id.0 as usize)
            .into_iter()
            .flatten()
            .map(|e| &self.edges[e.0 as usize])
    }

    /// Nodes of `label` satisfying `filter`, ascending by key.
    pub fn scan(&self, label: NodeLabel, filter: &PropertyFilter) -> Result<Vec<&Node>, GraphError> {
        let mut out = Vec::new();
        for node in self.nodes_by_label(label) {
            if filter.matches(&node.props)? {
                out.push(node);
            }
        }
        Ok(out)
    }

    pub fn merge_node(
        &mut self,
        label: NodeLabel,
        key: &Props,
        props: &Props,
    ) -> Result<(NodeId, MergeOutcome), GraphError> {
        let node_key = key_from_props(label, key)?;
        for (name, v) in props {
            v.check_supported(name)?;
            if let Some(kv) = key.get(name) {
                if kv != v {
                    return Err(GraphError::Schema(format!(
                        "{label}.{name}: key property cannot be changed by props"
                    )));
                }
            }
        }
        if let Some(&id) = self.key_index.get(&label).and_then(|m| m.get(&node_key)) {
            let node = &mut self.nodes[id.0 as usize];
            let changed = check_overwrite(&node.props, props, &|| label.to_string())?;
            if !changed {
                return Ok((id, MergeOutcome::Unchanged));
            }
            for (k, v) in props {
                node.props.insert(k.clone(), v.clone());
            }
            return Ok((id, MergeOutcome::Updated));
        }
        let id = NodeId(self.nodes.len() as u64);
        let mut all = key.clone();
        for (k, v) in props {
            all.insert(k.clone(), v.clone());
        }
        self.nodes.push(Node {
            id,
            label,
            key: node_key.clone(),
            props: all,
        });
        self.out_adj.push(Vec::new());
        self.in_adj.push(Vec::new());
        self.key_index.entry(label).or_default().insert(node_key, id);
        Ok((id, MergeOutcome::Created))
    }

    pub fn merge_edge(
        &mut self,
        edge_type: EdgeType,
        src: NodeId,
        dst: NodeId,
        props: &Props,
    ) -> Result<(EdgeId, MergeOutcome), GraphError> {
        let src_label = self.node(src).ok_or(GraphError::NodeNotFound(src))?.label;
        let dst_label = self.node(dst).ok_or(GraphError::NodeNotFound(dst))?.label;
        if !edge_type.accepts(src_label, dst_label) {
            let (want_src, want_dst) = edge_type.signature();
            return Err(GraphError::Schema(format!(
                "{edge_type} requires {want_src}->{want_dst}, got {src_label}->{dst_label}"
            )));
        }
        if let Some(&id) = self.edge_index.get(&(edge_type, src, dst)) {
            let edge = &mut self.edges[id.0 as usize];
            let changed = check_overwrite(&edge.props, props, &|| edge_type.to_string())?;
            if !changed {
                return Ok((id, MergeOutcome::Unchanged));
            }
            for (k, v) in props {
                edge.props.insert(k.clone(), v.clone());
            }
            return Ok((id, MergeOutcome::Updated));
        }
        for (name, v) in props {
            v.check_supported(name)?;
        }
        let id = EdgeId(self.edges.len() as u64);
        self.edges.push(Edge {
            id,
            edge_type,
            src,
            dst,
            props: props.clone(),
        });
        self.edge_index.insert((edge_type, src, dst), id);
        self.type_index.entry(edge_type).or_default().push(id);
        self.out_adj[src.0 as usize].push(id);
        self.in_adj[dst.0 as usize].push(id);
        Ok((id, MergeOutcome::Created))
    }

    /// Rebuild from raw tables, as read from a snapshot.
    pub(crate) fn from_parts(
        nodes: Vec<(NodeLabel, Props)>,
        edges: Vec<(EdgeType, NodeId, NodeId, Props)>,
    ) -> Result<Self, GraphError> {
        let mut data = GraphData::new();
        for (label, all) in nodes {
            let key: Props = label
                .key_properties()
                .iter()
                .filter_map(|n| all.get(*n).map(|v| (n.to_string(), v.clone())))
                .collect();
            let (_, outcome) = data.merge_node(label, &key, &all)?;
            if outcome != MergeOutcome::Created {
                return Err(GraphError::Schema(format!(
                    "duplicate {label} key in snapshot"
                )));
            }
        }
        for (t, src, dst, props) in edges {
            let (_, outcome) = data.merge_edge(t, src, dst, &props)?;
            if outcome != MergeOutcome::Created {
                return Err(GraphError::Schema(format!("duplicate {t} edge in snapshot")));
            }
        }
        Ok(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::value::props;

    fn vuln(id: &str) -> Props {
        props([("cveID", id)])
    }

    #[test]
    fn merge_is_idempotent() {
        let mut g = GraphData::new();
        let p = props([("description", "SMBv1 remote code execution")]);
        let (a, o1) = g.merge_node(NodeLabel::Vulnerability, &vuln("CVE-2017-0144"), &p).unwrap();
        let (b, o2) = g.merge_node(NodeLabel::Vulnerability, &vuln("CVE-2017-0144"), &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(o1, MergeOutcome::Created);
        assert_eq!(o2, MergeOutcome::Unchanged);
        assert_eq!(g.count_label(NodeLabel::Vulnerability), 1);
    }

    #[test]
    fn last_writer_wins_per_property() {
        let mut g = GraphData::new();
        let k = vuln("CVE-2017-0144");
        g.merge_node(NodeLabel::Vulnerability, &k, &props([("a", "x"), ("b", "y")])).unwrap();
        let (id, o) = g.merge_node(NodeLabel::Vulnerability, &k, &props([("b", "z")])).unwrap();
        assert_eq!(o, MergeOutcome::Updated);
        let n = g.node(id).unwrap();
        assert_eq!(n.get("a"), Some(&Value::from("x")));
        assert_eq!(n.get("b"), Some(&Value::from("z")));
    }

    #[test]
    fn type_conflicting_overwrite_rejected() {
        let mut g = GraphData::new();
        let k = vuln("CVE-2017-0144");
        g.merge_node(NodeLabel::Vulnerability, &k, &props([("score", 8.1)])).unwrap();
        let err = g
            .merge_node(NodeLabel::Vulnerability, &k, &props([("score", "high")]))
            .unwrap_err();
        assert!(matches!(err, GraphError::Schema(_)));
        // int over float is fine
        g.merge_node(NodeLabel::Vulnerability, &k, &props([("score", 8i64)])).unwrap();
    }

    #[test]
    fn key_validation() {
        let mut g = GraphData::new();
        assert!(g.merge_node(NodeLabel::Vulnerability, &vuln(""), &Props::new()).is_err());
        assert!(g.merge_node(NodeLabel::Vulnerability, &vuln("   "), &Props::new()).is_err());
        assert!(g
            .merge_node(NodeLabel::Product, &props([("name", "windows_7")]), &Props::new())
            .is_err());
        assert!(g
            .merge_node(NodeLabel::Vendor, &props([("name", Value::Int(3))]), &Props::new())
            .is_err());
        assert!(g
            .merge_node(
                NodeLabel::Vulnerability,
                &vuln("CVE-1"),
                &props([("cveID", "CVE-2")])
            )
            .is_err());
        assert!(g
            .merge_node(NodeLabel::Vulnerability, &vuln("CVE-1"), &props([("x", f64::NAN)]))
            .is_err());
        assert_eq!(g.node_count(), 0);
    }

    #[test]
    fn product_key_is_composite() {
        let mut g = GraphData::new();
        let a = props([("name", "office"), ("vendorName", "microsoft")]);
        let b = props([("name", "office"), ("vendorName", "libreoffice")]);
        g.merge_node(NodeLabel::Product, &a, &Props::new()).unwrap();
        g.merge_node(NodeLabel::Product, &b, &Props::new()).unwrap();
        assert_eq!(g.count_label(NodeLabel::Product), 2);
        assert!(g
            .find(NodeLabel::Product, &NodeKey::product("office", "microsoft"))
            .is_some());
    }

    #[test]
    fn edges_dedupe_and_check_signature() {
        let mut g = GraphData::new();
        let (v, _) = g.merge_node(NodeLabel::Vulnerability, &vuln("CVE-2017-0144"), &Props::new()).unwrap();
        let (e, _) = g
            .merge_node(NodeLabel::Exploit, &props([("exploitID", "41891")]), &Props::new())
            .unwrap();
        let (a, _) = g
            .merge_node(NodeLabel::Author, &props([("name", "sleepya")]), &Props::new())
            .unwrap();
        g.merge_edge(EdgeType::EXPLOITS, e, v, &Props::new()).unwrap();
        g.merge_edge(EdgeType::EXPLOITS, e, v, &Props::new()).unwrap();
        assert_eq!(g.count_type(EdgeType::EXPLOITS), 1);
        assert!(matches!(
            g.merge_edge(EdgeType::AFFECTS, a, e, &Props::new()),
            Err(GraphError::Schema(_))
        ));
        assert!(matches!(
            g.merge_edge(EdgeType::EXPLOITS, e, NodeId(99), &Props::new()),
            Err(GraphError::NodeNotFound(_))
        ));
        assert_eq!(g.outgoing(e).count(), 1);
        assert_eq!(g.incoming(v).count(), 1);
    }
}
