use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::graph::{key_props, Comparator, EdgeId, GraphData, Node, NodeId, NodeKey, NodeLabel, Props, Value};

use super::ast::*;

/// A node as it appears in a result row.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSummary {
    pub label: NodeLabel,
    pub key: NodeKey,
    pub props: Props,
}

impl NodeSummary {
    pub fn from_node(n: &Node) -> Self {
        NodeSummary {
            label: n.label,
            key: n.key.clone(),
            props: n.props.clone(),
        }
    }
}

impl Serialize for NodeSummary {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(3))?;
        m.serialize_entry("label", self.label.as_str())?;
        m.serialize_entry("key", &key_props(self.label, &self.key))?;
        m.serialize_entry("props", &self.props)?;
        m.end()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResultValue {
    Null,
    Scalar(Value),
    Node(NodeSummary),
}

impl ResultValue {
    fn rank(&self) -> u8 {
        match self {
            ResultValue::Null => 0,
            ResultValue::Scalar(_) => 1,
            ResultValue::Node(_) => 2,
        }
    }

    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ResultValue::Scalar(a), ResultValue::Scalar(b)) => a.total_cmp(b),
            (ResultValue::Node(a), ResultValue::Node(b)) => (a.label, &a.key).cmp(&(b.label, &b.key)),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }

    /// Plain text form for console and CLI output.
    pub fn render(&self) -> String {
        match self {
            ResultValue::Null => "null".to_string(),
            ResultValue::Scalar(v) => v.render(),
            ResultValue::Node(n) => format!("({}:{})", n.label, n.key),
        }
    }
}

impl Serialize for ResultValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ResultValue::Null => s.serialize_none(),
            ResultValue::Scalar(v) => v.serialize(s),
            ResultValue::Node(n) => n.serialize(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<ResultValue>>,
}

impl ResultTable {
    /// Distinct values of one column, rendered.
    pub fn column_values(&self, column: &str) -> BTreeSet<String> {
        let Some(i) = self.columns.iter().position(|c| c == column) else {
            return BTreeSet::new();
        };
        self.rows.iter().map(|r| r[i].render()).collect()
    }
}

fn cmp_rows(a: &[ResultValue], b: &[ResultValue]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.total_cmp(y);
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Sort and deduplicate rows in place.
pub(crate) fn normalize_rows(rows: &mut Vec<Vec<ResultValue>>) {
    rows.sort_by(|a, b| cmp_rows(a, b));
    rows.dedup_by(|a, b| cmp_rows(a, b) == Ordering::Equal);
}

/// Variable slots for one query. Anonymous node patterns get their own slot.
struct Slots {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Slots {
    fn slot_for(&mut self, node: &NodePattern) -> usize {
        match &node.variable {
            Some(v) => {
                if let Some(&i) = self.index.get(v) {
                    return i;
                }
                let i = self.names.len();
                self.names.push(v.clone());
                self.index.insert(v.clone(), i);
                i
            }
            None => {
                self.names.push(String::new());
                self.names.len() - 1
            }
        }
    }
}

struct CompiledNode<'a> {
    slot: usize,
    pattern: &'a NodePattern,
}

struct CompiledPath<'a> {
    start: CompiledNode<'a>,
    steps: Vec<(EdgePattern, CompiledNode<'a>)>,
}

type Row = Vec<Option<NodeId>>;

fn node_matches(g: &GraphData, id: NodeId, p: &NodePattern) -> bool {
    let Some(n) = g.node(id) else { return false };
    if p.label.is_some_and(|l| l != n.label) {
        return false;
    }
    p.props.iter().all(|(k, v)| {
        n.props
            .get(k)
            .is_some_and(|stored| Comparator::Eq.apply(stored, v) == Some(true))
    })
}

fn candidates<'g>(g: &'g GraphData, p: &NodePattern) -> Box<dyn Iterator<Item = NodeId> + 'g> {
    match p.label {
        Some(l) => Box::new(g.nodes_by_label(l).map(|n| n.id)),
        None => Box::new(g.nodes().map(|n| n.id)),
    }
}

/// Extend `row` along `path`, pushing every completed binding into `out`.
/// `used` holds the relationships already consumed in this MATCH clause.
fn extend_path(
    g: &GraphData,
    path: &CompiledPath<'_>,
    row: &Row,
    used: &HashSet<EdgeId>,
    out: &mut Vec<(Row, HashSet<EdgeId>)>,
) {
    let starts: Vec<NodeId> = match row[path.start.slot] {
        Some(id) => vec![id],
        None => candidates(g, path.start.pattern).collect(),
    };
    for s in starts {
        if !node_matches(g, s, path.start.pattern) {
            continue;
        }
        let mut r = row.clone();
        r[path.start.slot] = Some(s);
        walk(g, path, 0, s, r, used.clone(), out);
    }
}

fn walk(
    g: &GraphData,
    path: &CompiledPath<'_>,
    step: usize,
    at: NodeId,
    row: Row,
    used: HashSet<EdgeId>,
    out: &mut Vec<(Row, HashSet<EdgeId>)>,
) {
    let Some((edge, next)) = path.steps.get(step) else {
        out.push((row, used));
        return;
    };
    let hops: Vec<(EdgeId, NodeId)> = match edge.direction {
        Direction::Outgoing => g
            .outgoing(at)
            .filter(|e| edge.edge_type.is_none_or(|t| t == e.edge_type))
            .map(|e| (e.id, e.dst))
            .collect(),
        Direction::Incoming => g
            .incoming(at)
            .filter(|e| edge.edge_type.is_none_or(|t| t == e.edge_type))
            .map(|e| (e.id, e.src))
            .collect(),
    };
    for (eid, other) in hops {
        if used.contains(&eid) {
            continue;
        }
        if let Some(bound) = row[next.slot] {
            if bound != other {
                continue;
            }
        }
        if !node_matches(g, other, next.pattern) {
            continue;
        }
        let mut r = row.clone();
        r[next.slot] = Some(other);
        let mut u = used.clone();
        u.insert(eid);
        walk(g, path, step + 1, other, r, u, out);
    }
}

/// Evaluate a validated query against a read view.
pub fn execute(ast: &QueryAst, g: &GraphData) -> ResultTable {
    let mut slots = Slots {
        names: Vec::new(),
        index: HashMap::new(),
    };
    let clauses: Vec<Vec<CompiledPath<'_>>> = ast
        .match_clauses
        .iter()
        .map(|c| {
            c.paths
                .iter()
                .map(|p| CompiledPath {
                    start: CompiledNode {
                        slot: slots.slot_for(&p.start),
                        pattern: &p.start,
                    },
                    steps: p
                        .steps
                        .iter()
                        .map(|(e, n)| {
                            (
                                *e,
                                CompiledNode {
                                    slot: slots.slot_for(n),
                                    pattern: n,
                                },
                            )
                        })
                        .collect(),
                })
                .collect()
        })
        .collect();
    let width = slots.names.len();

    // Each MATCH clause is evaluated on its own (relationship uniqueness is
    // clause-scoped), then hash-joined with the rows so far on shared slots.
    let mut acc: Vec<Row> = vec![vec![None; width]];
    let mut acc_slots: BTreeSet<usize> = BTreeSet::new();
    for clause in &clauses {
        let mut rows: Vec<(Row, HashSet<EdgeId>)> = vec![(vec![None; width], HashSet::new())];
        for path in clause {
            let mut next = Vec::new();
            for (row, used) in &rows {
                extend_path(g, path, row, used, &mut next);
            }
            rows = next;
            if rows.is_empty() {
                break;
            }
        }
        let clause_slots: BTreeSet<usize> = clause
            .iter()
            .flat_map(|p| std::iter::once(p.start.slot).chain(p.steps.iter().map(|(_, n)| n.slot)))
            .collect();
        let mut clause_rows: Vec<Row> = rows.into_iter().map(|(r, _)| r).collect();
        clause_rows.sort();
        clause_rows.dedup();

        let shared: Vec<usize> = clause_slots.intersection(&acc_slots).copied().collect();
        let mut table: HashMap<Vec<Option<NodeId>>, Vec<&Row>> = HashMap::new();
        for r in &clause_rows {
            table
                .entry(shared.iter().map(|&s| r[s]).collect())
                .or_default()
                .push(r);
        }
        let mut joined = Vec::new();
        for a in &acc {
            let k: Vec<Option<NodeId>> = shared.iter().map(|&s| a[s]).collect();
            if let Some(matches) = table.get(&k) {
                for b in matches {
                    let mut r = a.clone();
                    for &s in &clause_slots {
                        r[s] = b[s];
                    }
                    joined.push(r);
                }
            }
        }
        joined.sort();
        joined.dedup();
        acc = joined;
        acc_slots.extend(clause_slots);
        if acc.is_empty() {
            break;
        }
    }

    let slot_of = |v: &str| slots.index[v];
    let preds: Vec<(usize, &Predicate)> = ast
        .where_clause
        .iter()
        .map(|p| (slot_of(&p.variable), p))
        .collect();
    acc.retain(|row| {
        preds.iter().all(|(slot, p)| {
            let n = g.node(row[*slot].expect("bound")).expect("live node");
            n.props
                .get(&p.property)
                .and_then(|v| p.comparator.apply(v, &p.value))
                .unwrap_or(false)
        })
    });

    let items: Vec<(usize, &ReturnItem)> = ast
        .return_items
        .iter()
        .map(|r| (slot_of(&r.variable), r))
        .collect();
    let mut out_rows: Vec<Vec<ResultValue>> = acc
        .iter()
        .map(|row| {
            items
                .iter()
                .map(|(slot, item)| {
                    let n = g.node(row[*slot].expect("bound")).expect("live node");
                    match &item.property {
                        None => ResultValue::Node(NodeSummary::from_node(n)),
                        Some(p) => n.props.get(p).cloned().map_or(ResultValue::Null, ResultValue::Scalar),
                    }
                })
                .collect()
        })
        .collect();
    normalize_rows(&mut out_rows);
    if let Some(limit) = ast.limit {
        out_rows.truncate(limit as usize);
    }
    ResultTable {
        columns: ast.return_items.iter().map(ReturnItem::column_name).collect(),
        rows: out_rows,
    }
}

/// Distinct node summaries referenced anywhere in a result, keyed by label.
pub fn distinct_entities(table: &ResultTable) -> BTreeMap<NodeLabel, BTreeSet<NodeKey>> {
    let mut out: BTreeMap<NodeLabel, BTreeSet<NodeKey>> = BTreeMap::new();
    for row in &table.rows {
        for v in row {
            if let ResultValue::Node(n) = v {
                out.entry(n.label).or_default().insert(n.key.clone());
            }
        }
    }
    out
}
