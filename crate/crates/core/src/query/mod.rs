//! Read-only Cypher subset.
//!
//! ```text
//! query  := match+ where? return limit? ";"?
//! match  := MATCH path ("," path)*
//! path   := node (edge node)*
//! node   := "(" var? (":" Label)? ("{" prop ":" literal ("," ...)* "}")? ")"
//! edge   := "-[" (":" TYPE)? "]->" | "<-[" (":" TYPE)? "]-"
//! where  := WHERE var.prop op literal (AND var.prop op literal)*
//! op     := = | <> | != | < | <= | > | >= | CONTAINS
//! return := RETURN var("." prop)? ("," ...)*
//! limit  := LIMIT positive-int
//! ```
//!
//! Keywords are case-insensitive, property names are not. The WHERE
//! comparators go beyond inline-map equality; a missing property or a type
//! mismatch makes the condition false rather than an error.

mod ast;
mod exec;
mod lexer;
mod parser;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use ast::{Direction, EdgePattern, MatchClause, NodePattern, PatternPath, Predicate, QueryAst, ReturnItem};
pub use exec::{distinct_entities, execute, NodeSummary, ResultTable, ResultValue};
pub use parser::{parse_statement, validate_read_only, Clause, Statement, MUTATION_KEYWORDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("syntax error at {position}: {message}")]
    Syntax { position: Position, message: String },
    #[error("unbound variable `{variable}` at {position}")]
    Unbound { variable: String, position: Position },
    #[error("semantic error at {position}: {message}")]
    Semantic { position: Position, message: String },
    #[error("unknown label `{name}` at {position}")]
    UnknownLabel { name: String, position: Position },
    #[error("unknown relationship type `{name}` at {position}")]
    UnknownEdgeType { name: String, position: Position },
    #[error("unsupported clause at {position}: {message}")]
    Unsupported { position: Position, message: String },
    #[error("{keyword} rejected at {position}: queries are limited to the read-only subset")]
    ReadOnly { keyword: String, position: Position },
}

impl QueryError {
    pub(crate) fn syntax(position: Position, message: impl Into<String>) -> Self {
        QueryError::Syntax {
            position,
            message: message.into(),
        }
    }

    pub fn position(&self) -> Option<Position> {
        match self {
            QueryError::Syntax { position, .. }
            | QueryError::Unbound { position, .. }
            | QueryError::Semantic { position, .. }
            | QueryError::UnknownLabel { position, .. }
            | QueryError::UnknownEdgeType { position, .. }
            | QueryError::Unsupported { position, .. }
            | QueryError::ReadOnly { position, .. } => Some(*position),
        }
    }

    pub fn is_read_only_violation(&self) -> bool {
        matches!(self, QueryError::ReadOnly { .. })
    }
}

/// Parse, reject write clauses, and check variable binding.
pub fn parse_query(text: &str) -> Result<QueryAst, QueryError> {
    parse_statement(text)?.into_query()
}

/// Parse and run against a read view.
pub fn run_query(text: &str, graph: &crate::graph::GraphData) -> Result<ResultTable, QueryError> {
    Ok(execute(&parse_query(text)?, graph))
}
