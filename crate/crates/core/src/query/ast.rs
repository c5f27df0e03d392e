use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use crate::graph::{Comparator, EdgeType, NodeLabel, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct QueryAst {
    pub match_clauses: Vec<MatchClause>,
    /// Conjunction of conditions.
    pub where_clause: Vec<Predicate>,
    pub return_items: Vec<ReturnItem>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchClause {
    pub paths: Vec<PatternPath>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternPath {
    pub start: NodePattern,
    pub steps: Vec<(EdgePattern, NodePattern)>,
}

impl PatternPath {
    pub fn nodes(&self) -> impl Iterator<Item = &NodePattern> {
        std::iter::once(&self.start).chain(self.steps.iter().map(|(_, n)| n))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodePattern {
    pub variable: Option<String>,
    pub label: Option<NodeLabel>,
    pub props: Vec<(String, Value)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `-[]->`
    Outgoing,
    /// `<-[]-`
    Incoming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgePattern {
    pub edge_type: Option<EdgeType>,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub variable: String,
    pub property: String,
    pub comparator: Comparator,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReturnItem {
    pub variable: String,
    pub property: Option<String>,
}

impl ReturnItem {
    pub fn column_name(&self) -> String {
        match &self.property {
            Some(p) => format!("{}.{}", self.variable, p),
            None => self.variable.clone(),
        }
    }
}

impl QueryAst {
    /// Variables bound by the MATCH clauses.
    pub fn bound_variables(&self) -> BTreeSet<&str> {
        self.match_clauses
            .iter()
            .flat_map(|c| c.paths.iter())
            .flat_map(PatternPath::nodes)
            .filter_map(|n| n.variable.as_deref())
            .collect()
    }
}

fn is_plain_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
        && !super::parser::is_reserved(s)
}

fn write_ident(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    if is_plain_identifier(s) {
        f.write_str(s)
    } else {
        write!(f, "`{s}`")
    }
}

pub(crate) fn write_literal(out: &mut impl fmt::Write, v: &Value) -> fmt::Result {
    match v {
        Value::Bool(b) => write!(out, "{b}"),
        Value::Int(i) => write!(out, "{i}"),
        // Debug keeps a decimal point or exponent, so it re-lexes as a float
        Value::Float(x) => write!(out, "{x:?}"),
        Value::Str(s) => {
            out.write_char('"')?;
            for c in s.chars() {
                match c {
                    '"' => out.write_str("\\\"")?,
                    '\\' => out.write_str("\\\\")?,
                    '\n' => out.write_str("\\n")?,
                    '\t' => out.write_str("\\t")?,
                    '\r' => out.write_str("\\r")?,
                    c => out.write_char(c)?,
                }
            }
            out.write_char('"')
        }
        Value::StrList(items) => {
            // not expressible as a literal in the subset
            write!(out, "{items:?}")
        }
    }
}

impl fmt::Display for NodePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_char('(')?;
        if let Some(v) = &self.variable {
            write_ident(f, v)?;
        }
        if let Some(l) = self.label {
            write!(f, ":{l}")?;
        }
        if !self.props.is_empty() {
            if self.variable.is_some() || self.label.is_some() {
                f.write_char(' ')?;
            }
            f.write_char('{')?;
            for (i, (k, v)) in self.props.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_ident(f, k)?;
                f.write_str(": ")?;
                write_literal(f, v)?;
            }
            f.write_char('}')?;
        }
        f.write_char(')')
    }
}

impl fmt::Display for EdgePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = match self.edge_type {
            Some(t) => format!("[:{t}]"),
            None => "[]".to_string(),
        };
        match self.direction {
            Direction::Outgoing => write!(f, "-{inner}->"),
            Direction::Incoming => write!(f, "<-{inner}-"),
        }
    }
}

impl fmt::Display for PatternPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.start)?;
        for (e, n) in &self.steps {
            write!(f, "{e}{n}")?;
        }
        Ok(())
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for clause in &self.match_clauses {
            f.write_str("MATCH ")?;
            for (i, p) in clause.paths.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{p}")?;
            }
            f.write_char('\n')?;
        }
        if !self.where_clause.is_empty() {
            f.write_str("WHERE ")?;
            for (i, p) in self.where_clause.iter().enumerate() {
                if i > 0 {
                    f.write_str(" AND ")?;
                }
                write_ident(f, &p.variable)?;
                f.write_char('.')?;
                write_ident(f, &p.property)?;
                write!(f, " {} ", p.comparator.symbol())?;
                write_literal(f, &p.value)?;
            }
            f.write_char('\n')?;
        }
        f.write_str("RETURN ")?;
        for (i, item) in self.return_items.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write_ident(f, &item.variable)?;
            if let Some(p) = &item.property {
                f.write_char('.')?;
                write_ident(f, p)?;
            }
        }
        if let Some(n) = self.limit {
            write!(f, "\nLIMIT {n}")?;
        }
        Ok(())
    }
}
