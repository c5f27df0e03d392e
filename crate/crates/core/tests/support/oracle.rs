//! Random graphs and a naive evaluator used as a reference for the query
//! engine. The evaluator enumerates every assignment of graph nodes to
//! pattern slots and checks each pattern edge by scanning all edges.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vulgd_core::graph::{props, EdgeType, GraphData, NodeId, NodeLabel, Value};
use vulgd_core::query::{Direction, QueryAst, ResultTable, ResultValue};

pub const TAGS: [&str; 3] = ["alpha", "beta", "gamma"];

pub fn random_graph(seed: u64, max_nodes: usize) -> GraphData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..=max_nodes);
    let mut g = GraphData::new();
    let mut ids: Vec<(NodeId, NodeLabel)> = Vec::new();
    for i in 0..n {
        let label = NodeLabel::ALL[rng.random_range(0..NodeLabel::ALL.len())];
        let key = match label {
            NodeLabel::Product => props([
                ("name", Value::from(format!("prod{i}"))),
                ("vendorName", Value::from(format!("vend{}", i % 3))),
            ]),
            NodeLabel::Vulnerability => props([("cveID", Value::from(format!("CVE-20{}-{i:04}", 15 + i % 4)))]),
            _ => props([(label.key_properties()[0], Value::from(format!("{}{i}", label.as_str().to_lowercase())))]),
        };
        let mut extra = props::<[(&str, Value); 0], &str, Value>([]);
        if rng.random_bool(0.7) {
            let v = if rng.random_bool(0.5) {
                Value::Int(rng.random_range(0..10))
            } else {
                Value::Float(rng.random_range(0..20) as f64 / 2.0)
            };
            extra.insert("score".into(), v);
        }
        if rng.random_bool(0.7) {
            extra.insert("tag".into(), Value::from(TAGS[rng.random_range(0..3)]));
        }
        if rng.random_bool(0.3) {
            extra.insert("flag".into(), Value::Bool(rng.random_bool(0.5)));
        }
        let (id, _) = g.merge_node(label, &key, &extra).expect("valid node");
        ids.push((id, label));
    }
    for _ in 0..n * 3 {
        let (a, la) = ids[rng.random_range(0..ids.len())];
        let (b, lb) = ids[rng.random_range(0..ids.len())];
        if let Some(t) = EdgeType::ALL.into_iter().find(|t| t.accepts(la, lb)) {
            g.merge_edge(t, a, b, &Default::default()).expect("valid edge");
        }
    }
    g
}

/// Query corpus covering every grammar construct.
pub const CORPUS: &[&str] = &[
    "MATCH (v:Vulnerability) RETURN v",
    "MATCH (v:Vulnerability {tag: 'alpha'}) RETURN v.cveID",
    "MATCH (v:Vulnerability)-[:AFFECTS]->(p:Product) RETURN v, p",
    "MATCH (p:Product)<-[:AFFECTS]-(v) RETURN p.name, v",
    "MATCH (a)-[]->(b) RETURN a, b",
    "MATCH (a)-[]->(b) RETURN b.tag",
    "MATCH (v:Vulnerability)-[:AFFECTS]->(p)-[:BELONGS_TO]->(d:Vendor) RETURN v, d",
    "MATCH (v:Vulnerability) MATCH (v)-[:EXAMPLE_OF]->(w:Weakness) RETURN v, w",
    "MATCH (v:Vulnerability)-[:REFERS_TO]->(d), (v)-[:EXAMPLE_OF]->(w) RETURN d, w",
    "MATCH (ex:Exploit)-[:EXPLOITS]->(v)<-[:WRITES]-(a:Author) RETURN ex, a",
    "MATCH (a:Author)-[:WRITES]->(e:Exploit) MATCH (a)-[:WRITES]->(v:Vulnerability) RETURN a, e, v",
    "MATCH (n) WHERE n.score >= 5 RETURN n",
    "MATCH (n) WHERE n.score < 3 AND n.tag <> 'beta' RETURN n, n.score",
    "MATCH (n) WHERE n.score = 4.5 RETURN n.score",
    "MATCH (n:Vulnerability) WHERE n.cveID CONTAINS '2016' RETURN n.cveID",
    "MATCH (n) WHERE n.score > 2 AND n.score <= 7 RETURN n",
    "MATCH (n) WHERE n.flag = true RETURN n.flag, n.tag",
    "MATCH (n {tag: 'gamma'})-[]->(m) WHERE m.tag = 'gamma' RETURN n, m",
    "MATCH (a)<-[]-(b)<-[]-(c) RETURN a, c",
    "MATCH (a)-[]->(b), (c)-[]->(b) RETURN a, c",
    "MATCH (v:Vulnerability)-[:AFFECTS]->(p) MATCH (q:Product)-[:BELONGS_TO]->(d) WHERE q.tag = 'alpha' RETURN p, d",
    "MATCH (x:Product)-[:BELONGS_TO]->(y) RETURN y.name, x.vendorName",
    "MATCH (n:Weakness) WHERE n.missing = 1 RETURN n",
];

/// Queries with LIMIT, checked against the unlimited result.
pub const LIMIT_CORPUS: &[(&str, u64)] = &[
    ("MATCH (n) RETURN n", 3),
    ("MATCH (a)-[]->(b) RETURN a, b", 5),
    ("MATCH (v:Vulnerability) RETURN v.cveID", 1),
    ("MATCH (n) WHERE n.score >= 0 RETURN n.score", 1000),
];

fn oracle_compare(op: &str, stored: &Value, lit: &Value) -> bool {
    use std::cmp::Ordering::*;
    let ord = match (stored, lit) {
        (Value::Str(a), Value::Str(b)) => {
            if op == "CONTAINS" {
                return a.contains(b.as_str());
            }
            a.cmp(b)
        }
        (Value::Bool(a), Value::Bool(b)) if op != "CONTAINS" => a.cmp(b),
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) if op != "CONTAINS" => {
            let f = |v: &Value| match v {
                Value::Int(i) => *i as f64,
                Value::Float(x) => *x,
                _ => unreachable!(),
            };
            f(stored).partial_cmp(&f(lit)).unwrap()
        }
        _ => return false,
    };
    match op {
        "=" => ord == Equal,
        "<>" => ord != Equal,
        "<" => ord == Less,
        "<=" => ord != Greater,
        ">" => ord == Greater,
        ">=" => ord != Less,
        _ => false,
    }
}

pub fn render_cell(v: &ResultValue) -> String {
    match v {
        ResultValue::Null => "null".into(),
        ResultValue::Scalar(s) => format!("{s:?}"),
        ResultValue::Node(n) => format!("{}:{}", n.label, n.key),
    }
}

pub fn render_table(t: &ResultTable) -> BTreeSet<Vec<String>> {
    t.rows.iter().map(|r| r.iter().map(render_cell).collect()).collect()
}

struct PatEdge {
    clause: usize,
    from: usize,
    to: usize,
    edge_type: Option<EdgeType>,
}

/// Every row of `ast` on `g`, ignoring LIMIT, as rendered strings.
pub fn brute_force(ast: &QueryAst, g: &GraphData) -> BTreeSet<Vec<String>> {
    let mut names: HashMap<String, usize> = HashMap::new();
    let mut slot_patterns: Vec<Vec<&vulgd_core::query::NodePattern>> = Vec::new();
    let mut slot = |p: &'_ vulgd_core::query::NodePattern, pats: &mut Vec<Vec<_>>| -> usize {
        let i = match &p.variable {
            Some(v) if names.contains_key(v) => names[v],
            Some(v) => {
                names.insert(v.clone(), pats.len());
                pats.push(Vec::new());
                pats.len() - 1
            }
            None => {
                pats.push(Vec::new());
                pats.len() - 1
            }
        };
        i
    };
    let mut pat_edges = Vec::new();
    for (ci, clause) in ast.match_clauses.iter().enumerate() {
        for path in &clause.paths {
            let mut prev = slot(&path.start, &mut slot_patterns);
            slot_patterns[prev].push(&path.start);
            for (e, n) in &path.steps {
                let cur = slot(n, &mut slot_patterns);
                slot_patterns[cur].push(n);
                let (from, to) = match e.direction {
                    Direction::Outgoing => (prev, cur),
                    Direction::Incoming => (cur, prev),
                };
                pat_edges.push(PatEdge {
                    clause: ci,
                    from,
                    to,
                    edge_type: e.edge_type,
                });
                prev = cur;
            }
        }
    }
    let all_nodes: Vec<NodeId> = g.nodes().map(|n| n.id).collect();
    let mut out = BTreeSet::new();
    let mut assign = vec![NodeId(0); slot_patterns.len()];
    enumerate(0, &mut assign, &slot_patterns, &all_nodes, &pat_edges, g, &mut |a| {
        if !edges_distinct(a, &pat_edges, ast.match_clauses.len(), g) {
            return;
        }
        for p in &ast.where_clause {
            let n = g.node(a[names[&p.variable]]).unwrap();
            match n.props.get(&p.property) {
                Some(v) if oracle_compare(p.comparator.symbol(), v, &p.value) => {}
                _ => return,
            }
        }
        let row = ast
            .return_items
            .iter()
            .map(|item| {
                let n = g.node(a[names[&item.variable]]).unwrap();
                match &item.property {
                    None => format!("{}:{}", n.label, n.key),
                    Some(p) => n.props.get(p).map_or("null".into(), |v| format!("{v:?}")),
                }
            })
            .collect();
        out.insert(row);
    });
    out
}

fn node_ok(g: &GraphData, id: NodeId, pats: &[&vulgd_core::query::NodePattern]) -> bool {
    let n = g.node(id).unwrap();
    pats.iter().all(|p| {
        p.label.is_none_or(|l| l == n.label)
            && p.props
                .iter()
                .all(|(k, v)| n.props.get(k).is_some_and(|s| oracle_compare("=", s, v)))
    })
}

fn has_edge(g: &GraphData, e: &PatEdge, a: &[NodeId]) -> bool {
    g.edges()
        .any(|x| x.src == a[e.from] && x.dst == a[e.to] && e.edge_type.is_none_or(|t| t == x.edge_type))
}

fn enumerate(
    depth: usize,
    assign: &mut Vec<NodeId>,
    pats: &[Vec<&vulgd_core::query::NodePattern>],
    all: &[NodeId],
    pat_edges: &[PatEdge],
    g: &GraphData,
    visit: &mut dyn FnMut(&[NodeId]),
) {
    if depth == pats.len() {
        visit(assign);
        return;
    }
    for &id in all {
        if !node_ok(g, id, &pats[depth]) {
            continue;
        }
        assign[depth] = id;
        // prune on pattern edges whose endpoints are now both assigned
        let ok = pat_edges
            .iter()
            .filter(|e| e.from.max(e.to) == depth)
            .all(|e| has_edge(g, e, assign));
        if ok {
            enumerate(depth + 1, assign, pats, all, pat_edges, g, visit);
        }
    }
}

/// Within each MATCH clause the pattern edges must bind pairwise-distinct
/// relationships. Tries every combination of candidate edges.
fn edges_distinct(a: &[NodeId], pat_edges: &[PatEdge], clauses: usize, g: &GraphData) -> bool {
    (0..clauses).all(|c| {
        let cands: Vec<Vec<u64>> = pat_edges
            .iter()
            .filter(|e| e.clause == c)
            .map(|e| {
                g.edges()
                    .filter(|x| x.src == a[e.from] && x.dst == a[e.to] && e.edge_type.is_none_or(|t| t == x.edge_type))
                    .map(|x| x.id.0)
                    .collect()
            })
            .collect();
        pick_distinct(&cands, 0, &mut Vec::new())
    })
}

fn pick_distinct(cands: &[Vec<u64>], i: usize, used: &mut Vec<u64>) -> bool {
    if i == cands.len() {
        return true;
    }
    for &c in &cands[i] {
        if !used.contains(&c) {
            used.push(c);
            if pick_distinct(cands, i + 1, used) {
                return true;
            }
            used.pop();
        }
    }
    false
}
