use std::collections::HashSet;

use crate::graph::{Comparator, EdgeType, NodeLabel, Value};

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::{Position, QueryError};

/// Clause keywords that would modify the graph.
pub const MUTATION_KEYWORDS: &[&str] = &["CREATE", "MERGE", "DELETE", "DETACH", "SET", "REMOVE", "DROP", "FOREACH"];

/// Recognised Cypher clauses outside the supported subset.
const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "OPTIONAL", "WITH", "UNWIND", "ORDER", "SKIP", "UNION", "CALL", "LOAD", "USE", "YIELD",
];

const CLAUSE_KEYWORDS: &[&str] = &["MATCH", "WHERE", "RETURN", "LIMIT"];

pub(crate) fn is_reserved(s: &str) -> bool {
    CLAUSE_KEYWORDS
        .iter()
        .chain(MUTATION_KEYWORDS)
        .chain(UNSUPPORTED_KEYWORDS)
        .chain(["AND", "CONTAINS", "TRUE", "FALSE"].iter())
        .any(|k| s.eq_ignore_ascii_case(k))
}

/// A parsed statement before the read-only and structural checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub clauses: Vec<Clause>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Clause {
    Match(MatchClause, Position),
    Where(Vec<(Predicate, Position)>, Position),
    Return(Vec<(ReturnItem, Position)>, Position),
    Limit(u64, Position),
    /// A write clause; its body is skipped, not parsed.
    Mutation(String, Position),
}

struct Parser {
    tokens: Vec<Token>,
    idx: usize,
    end: Position,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.idx)
    }

    fn pos(&self) -> Position {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.idx).cloned();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn at(&self, tok: &Tok) -> bool {
        self.peek().is_some_and(|t| &t.tok == tok)
    }

    fn at_keyword(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(kw))
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.at(tok) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Position, QueryError> {
        let pos = self.pos();
        match self.next() {
            Some(t) if t.tok == tok => Ok(t.pos),
            Some(t) => Err(QueryError::syntax(t.pos, format!("expected {tok}, found {}", t.tok))),
            None => Err(QueryError::syntax(pos, format!("expected {tok}, found end of input"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Position), QueryError> {
        let pos = self.pos();
        match self.next() {
            Some(Token { tok: Tok::Ident(s), pos }) => {
                if is_reserved(&s) {
                    Err(QueryError::syntax(pos, format!("expected {what}, found keyword `{s}`")))
                } else {
                    Ok((s, pos))
                }
            }
            Some(Token { tok: Tok::Quoted(s), pos }) => Ok((s, pos)),
            Some(t) => Err(QueryError::syntax(t.pos, format!("expected {what}, found {}", t.tok))),
            None => Err(QueryError::syntax(pos, format!("expected {what}, found end of input"))),
        }
    }

    fn at_clause_start(&self) -> bool {
        self.peek().is_some_and(|t| {
            CLAUSE_KEYWORDS
                .iter()
                .chain(MUTATION_KEYWORDS)
                .any(|k| t.is_keyword(k))
        })
    }

    fn statement(&mut self) -> Result<Statement, QueryError> {
        let mut clauses = Vec::new();
        loop {
            while self.eat(&Tok::Semicolon) {}
            let Some(tok) = self.peek().cloned() else { break };
            let pos = tok.pos;
            if tok.is_keyword("MATCH") {
                self.next();
                clauses.push(Clause::Match(self.match_body()?, pos));
            } else if tok.is_keyword("WHERE") {
                self.next();
                clauses.push(Clause::Where(self.where_body()?, pos));
            } else if tok.is_keyword("RETURN") {
                self.next();
                clauses.push(Clause::Return(self.return_body()?, pos));
            } else if tok.is_keyword("LIMIT") {
                self.next();
                clauses.push(Clause::Limit(self.limit_body()?, pos));
            } else if let Some(kw) = MUTATION_KEYWORDS.iter().find(|k| tok.is_keyword(k)) {
                self.next();
                while self.peek().is_some() && !self.at_clause_start() {
                    self.next();
                }
                clauses.push(Clause::Mutation(kw.to_string(), pos));
            } else if let Some(kw) = UNSUPPORTED_KEYWORDS.iter().find(|k| tok.is_keyword(k)) {
                return Err(QueryError::Unsupported {
                    position: pos,
                    message: format!("{kw} is not part of the supported query subset"),
                });
            } else {
                return Err(QueryError::syntax(pos, format!("expected a clause keyword, found {}", tok.tok)));
            }
        }
        Ok(Statement { clauses })
    }

    fn match_body(&mut self) -> Result<MatchClause, QueryError> {
        let mut paths = vec![self.path()?];
        while self.eat(&Tok::Comma) {
            paths.push(self.path()?);
        }
        Ok(MatchClause { paths })
    }

    fn path(&mut self) -> Result<PatternPath, QueryError> {
        let start = self.node()?;
        let mut steps = Vec::new();
        while self.at(&Tok::Minus) || self.at(&Tok::Lt) {
            let edge = self.edge()?;
            let node = self.node()?;
            steps.push((edge, node));
        }
        Ok(PatternPath { start, steps })
    }

    fn node(&mut self) -> Result<NodePattern, QueryError> {
        self.expect(Tok::LParen)?;
        let mut node = NodePattern::default();
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::Ident(_) | Tok::Quoted(_))) {
            node.variable = Some(self.ident("variable")?.0);
        }
        if self.eat(&Tok::Colon) {
            let (name, pos) = self.ident("label")?;
            let label = name
                .parse::<NodeLabel>()
                .map_err(|_| QueryError::UnknownLabel { position: pos, name })?;
            node.label = Some(label);
        }
        if self.at(&Tok::LBrace) {
            node.props = self.prop_map()?;
        }
        self.expect(Tok::RParen)?;
        Ok(node)
    }

    fn prop_map(&mut self) -> Result<Vec<(String, Value)>, QueryError> {
        self.expect(Tok::LBrace)?;
        let mut props: Vec<(String, Value)> = Vec::new();
        if self.eat(&Tok::RBrace) {
            return Ok(props);
        }
        loop {
            let (name, pos) = self.ident("property name")?;
            self.expect(Tok::Colon)?;
            let value = self.literal()?;
            if props.iter().any(|(k, _)| k == &name) {
                return Err(QueryError::syntax(pos, format!("duplicate property `{name}`")));
            }
            props.push((name, value));
            if self.eat(&Tok::RBrace) {
                return Ok(props);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn edge(&mut self) -> Result<EdgePattern, QueryError> {
        let incoming = self.eat(&Tok::Lt);
        self.expect(Tok::Minus)?;
        self.expect(Tok::LBracket)?;
        let mut edge_type = None;
        if self.eat(&Tok::Colon) {
            let (name, pos) = self.ident("relationship type")?;
            edge_type = Some(
                name.parse::<EdgeType>()
                    .map_err(|_| QueryError::UnknownEdgeType { position: pos, name })?,
            );
        }
        self.expect(Tok::RBracket)?;
        self.expect(Tok::Minus)?;
        let direction = if incoming {
            if self.at(&Tok::Gt) {
                return Err(QueryError::syntax(self.pos(), "relationship cannot point both ways"));
            }
            Direction::Incoming
        } else {
            if !self.at(&Tok::Gt) {
                return Err(QueryError::syntax(self.pos(), "relationship direction must be explicit (`->`)"));
            }
            self.next();
            Direction::Outgoing
        };
        Ok(EdgePattern { edge_type, direction })
    }

    fn literal(&mut self) -> Result<Value, QueryError> {
        let pos = self.pos();
        let negative = self.eat(&Tok::Minus);
        let t = self
            .next()
            .ok_or_else(|| QueryError::syntax(pos, "expected a literal, found end of input"))?;
        let v = match (t.tok, negative) {
            (Tok::Int(i), false) => Value::Int(i),
            (Tok::Int(i), true) => Value::Int(-i),
            (Tok::Float(x), false) => Value::Float(x),
            (Tok::Float(x), true) => Value::Float(-x),
            (Tok::Str(s), false) => Value::Str(s),
            (Tok::Ident(s), false) if s.eq_ignore_ascii_case("true") => Value::Bool(true),
            (Tok::Ident(s), false) if s.eq_ignore_ascii_case("false") => Value::Bool(false),
            (other, _) => return Err(QueryError::syntax(t.pos, format!("expected a literal, found {other}"))),
        };
        Ok(v)
    }

    fn where_body(&mut self) -> Result<Vec<(Predicate, Position)>, QueryError> {
        let mut preds = vec![self.predicate()?];
        while self.at_keyword("AND") {
            self.next();
            preds.push(self.predicate()?);
        }
        Ok(preds)
    }

    fn predicate(&mut self) -> Result<(Predicate, Position), QueryError> {
        let (variable, pos) = self.ident("variable")?;
        self.expect(Tok::Dot)?;
        let (property, _) = self.ident("property name")?;
        let op_pos = self.pos();
        let comparator = match self.next().map(|t| t.tok) {
            Some(Tok::Eq) => Comparator::Eq,
            Some(Tok::Ne) => Comparator::Ne,
            Some(Tok::Lt) => Comparator::Lt,
            Some(Tok::Le) => Comparator::Le,
            Some(Tok::Gt) => Comparator::Gt,
            Some(Tok::Ge) => Comparator::Ge,
            Some(Tok::Ident(s)) if s.eq_ignore_ascii_case("CONTAINS") => Comparator::Contains,
            _ => return Err(QueryError::syntax(op_pos, "expected a comparison operator")),
        };
        let value = self.literal()?;
        Ok((
            Predicate {
                variable,
                property,
                comparator,
                value,
            },
            pos,
        ))
    }

    fn return_body(&mut self) -> Result<Vec<(ReturnItem, Position)>, QueryError> {
        let mut items = Vec::new();
        loop {
            let (variable, pos) = self.ident("variable")?;
            let property = if self.eat(&Tok::Dot) {
                Some(self.ident("property name")?.0)
            } else {
                None
            };
            items.push((ReturnItem { variable, property }, pos));
            if !self.eat(&Tok::Comma) {
                return Ok(items);
            }
        }
    }

    fn limit_body(&mut self) -> Result<u64, QueryError> {
        let pos = self.pos();
        match self.next().map(|t| t.tok) {
            Some(Tok::Int(n)) if n > 0 => Ok(n as u64),
            Some(Tok::Int(_)) => Err(QueryError::syntax(pos, "LIMIT must be a positive integer")),
            _ => Err(QueryError::syntax(pos, "expected an integer after LIMIT")),
        }
    }
}

/// Tokenize and parse into clauses without structural validation.
pub fn parse_statement(text: &str) -> Result<Statement, QueryError> {
    if text.trim().is_empty() {
        return Err(QueryError::syntax(Position { line: 1, column: 1 }, "empty query"));
    }
    let tokens = tokenize(text)?;
    let end = end_position(text);
    Parser { tokens, idx: 0, end }.statement()
}

fn end_position(text: &str) -> Position {
    let line = text.lines().count().max(1) + usize::from(text.ends_with('\n'));
    let column = if text.ends_with('\n') {
        1
    } else {
        text.lines().last().map_or(0, |l| l.chars().count()) + 1
    };
    Position { line, column }
}

/// Reject any statement containing a write clause, naming the keyword.
pub fn validate_read_only(stmt: &Statement) -> Result<(), QueryError> {
    for clause in &stmt.clauses {
        if let Clause::Mutation(kw, pos) = clause {
            return Err(QueryError::ReadOnly {
                keyword: kw.clone(),
                position: *pos,
            });
        }
    }
    Ok(())
}

impl Statement {
    /// Check clause order (`MATCH+ WHERE? RETURN LIMIT?`) and variable
    /// binding, producing the executable query.
    pub fn into_query(self) -> Result<QueryAst, QueryError> {
        validate_read_only(&self)?;
        let mut iter = self.clauses.into_iter().peekable();
        let mut match_clauses = Vec::new();
        while let Some(Clause::Match(..)) = iter.peek() {
            if let Some(Clause::Match(m, _)) = iter.next() {
                match_clauses.push(m);
            }
        }
        if match_clauses.is_empty() {
            let pos = clause_pos(iter.peek()).unwrap_or(Position { line: 1, column: 1 });
            return Err(QueryError::syntax(pos, "query must start with MATCH"));
        }
        let mut where_items = Vec::new();
        if let Some(Clause::Where(..)) = iter.peek() {
            if let Some(Clause::Where(w, _)) = iter.next() {
                where_items = w;
            }
        }
        let return_items = match iter.next() {
            Some(Clause::Return(items, _)) => items,
            Some(other) => {
                let pos = clause_pos(Some(&other)).unwrap();
                return Err(QueryError::syntax(pos, "expected RETURN"));
            }
            None => {
                return Err(QueryError::syntax(
                    Position { line: 1, column: 1 },
                    "missing RETURN clause",
                ))
            }
        };
        let limit = match iter.next() {
            Some(Clause::Limit(n, _)) => Some(n),
            Some(other) => {
                let pos = clause_pos(Some(&other)).unwrap();
                return Err(QueryError::syntax(pos, "unexpected clause after RETURN"));
            }
            None => None,
        };
        if let Some(extra) = iter.next() {
            let pos = clause_pos(Some(&extra)).unwrap();
            return Err(QueryError::syntax(pos, "unexpected clause after LIMIT"));
        }

        let ast = QueryAst {
            match_clauses,
            where_clause: where_items.iter().map(|(p, _)| p.clone()).collect(),
            return_items: return_items.iter().map(|(r, _)| r.clone()).collect(),
            limit,
        };
        let bound = ast.bound_variables();
        for (p, pos) in &where_items {
            if !bound.contains(p.variable.as_str()) {
                return Err(QueryError::Unbound {
                    variable: p.variable.clone(),
                    position: *pos,
                });
            }
        }
        let mut seen = HashSet::new();
        for (r, pos) in &return_items {
            if !bound.contains(r.variable.as_str()) {
                return Err(QueryError::Unbound {
                    variable: r.variable.clone(),
                    position: *pos,
                });
            }
            if !seen.insert(r.column_name()) {
                return Err(QueryError::Semantic {
                    position: *pos,
                    message: format!("duplicate return column `{}`", r.column_name()),
                });
            }
        }
        Ok(ast)
    }
}

fn clause_pos(c: Option<&Clause>) -> Option<Position> {
    c.map(|c| match c {
        Clause::Match(_, p)
        | Clause::Where(_, p)
        | Clause::Return(_, p)
        | Clause::Limit(_, p)
        | Clause::Mutation(_, p) => *p,
    })
}
