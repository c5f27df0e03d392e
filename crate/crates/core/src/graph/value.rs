use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::GraphError;

/// A property value. Nested maps are not representable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    StrList(Vec<String>),
}

pub type Props = BTreeMap<String, Value>;

/// Coarse type used for overwrite conflict detection: integers and floats
/// are interchangeable, everything else must keep its kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Bool,
    Number,
    Text,
    TextList,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueKind::Bool => "boolean",
            ValueKind::Number => "number",
            ValueKind::Text => "string",
            ValueKind::TextList => "string-list",
        };
        f.write_str(s)
    }
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Bool(_) => ValueKind::Bool,
            Value::Int(_) | Value::Float(_) => ValueKind::Number,
            Value::Str(_) => ValueKind::Text,
            Value::StrList(_) => ValueKind::TextList,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Total order used for deterministic sorting. Values of different kinds
    /// order by kind first.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v.kind() {
                ValueKind::Bool => 0,
                ValueKind::Number => 1,
                ValueKind::Text => 2,
                ValueKind::TextList => 3,
            }
        }
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::StrList(a), Value::StrList(b)) => a.cmp(b),
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (a, b) if a.kind() == ValueKind::Number && b.kind() == ValueKind::Number => {
                let (x, y) = (a.as_f64().unwrap(), b.as_f64().unwrap());
                x.total_cmp(&y).then_with(|| {
                    // 1 and 1.0 are numerically equal; keep Int before Float
                    matches!(a, Value::Float(_)).cmp(&matches!(b, Value::Float(_)))
                })
            }
            (a, b) => rank(a).cmp(&rank(b)),
        }
    }

    pub(crate) fn check_supported(&self, name: &str) -> Result<(), GraphError> {
        if let Value::Float(f) = self {
            if !f.is_finite() {
                return Err(GraphError::Schema(format!(
                    "property {name}: non-finite float"
                )));
            }
        }
        Ok(())
    }

    /// Plain text rendering used by exports and the CLI.
    pub fn render(&self) -> String {
        match self {
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => f.to_string(),
            Value::Str(s) => s.clone(),
            Value::StrList(l) => l.join(";"),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<f64> for Value {
    fn from(f: f64) -> Self {
        Value::Float(f)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<Vec<String>> for Value {
    fn from(l: Vec<String>) -> Self {
        Value::StrList(l)
    }
}

/// Build a property map from `(name, value)` pairs.
pub fn props<I, K, V>(pairs: I) -> Props
where
    I: IntoIterator<Item = (K, V)>,
    K: Into<String>,
    V: Into<Value>,
{
    pairs
        .into_iter()
        .map(|(k, v)| (k.into(), v.into()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Contains,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "<>",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Contains => "CONTAINS",
        }
    }

    /// Compare a stored value against a literal. `None` means the comparison
    /// is not defined for these types.
    pub fn apply(self, stored: &Value, literal: &Value) -> Option<bool> {
        if self == Comparator::Contains {
            return match (stored, literal) {
                (Value::Str(s), Value::Str(needle)) => Some(s.contains(needle.as_str())),
                _ => None,
            };
        }
        let ord = match (stored, literal) {
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::StrList(a), Value::StrList(b)) => {
                return match self {
                    Comparator::Eq => Some(a == b),
                    Comparator::Ne => Some(a != b),
                    _ => None,
                }
            }
            (a, b) if a.kind() == ValueKind::Number && b.kind() == ValueKind::Number => {
                a.as_f64()?.partial_cmp(&b.as_f64()?)?
            }
            _ => return None,
        };
        Some(match self {
            Comparator::Eq => ord == Ordering::Equal,
            Comparator::Ne => ord != Ordering::Equal,
            Comparator::Lt => ord == Ordering::Less,
            Comparator::Le => ord != Ordering::Greater,
            Comparator::Gt => ord == Ordering::Greater,
            Comparator::Ge => ord != Ordering::Less,
            Comparator::Contains => unreachable!(),
        })
    }
}

/// One conjunct of a scan predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub property: String,
    pub comparator: Comparator,
    pub value: Value,
}

impl Condition {
    pub fn new(property: impl Into<String>, comparator: Comparator, value: impl Into<Value>) -> Self {
        Condition {
            property: property.into(),
            comparator,
            value: value.into(),
        }
    }

    fn literal_allowed(&self) -> bool {
        match self.comparator {
            Comparator::Contains => matches!(self.value, Value::Str(_)),
            Comparator::Eq | Comparator::Ne => true,
            _ => !matches!(self.value, Value::StrList(_)),
        }
    }
}

/// Conjunction of conditions. Nodes lacking a referenced property do not match.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyFilter {
    pub conditions: Vec<Condition>,
}

impl PropertyFilter {
    pub fn all() -> Self {
        PropertyFilter::default()
    }

    pub fn and(mut self, condition: Condition) -> Self {
        self.conditions.push(condition);
        self
    }

    /// Evaluate against a property map. A stored value whose type cannot be
    /// compared with the literal is an error.
    pub fn matches(&self, props: &Props) -> Result<bool, GraphError> {
        for c in &self.conditions {
            if !c.literal_allowed() {
                return Err(GraphError::Comparator(format!(
                    "{} cannot take a {} literal",
                    c.comparator.symbol(),
                    c.value.kind()
                )));
            }
            let Some(stored) = props.get(&c.property) else {
                return Ok(false);
            };
            match c.comparator.apply(stored, &c.value) {
                Some(true) => {}
                Some(false) => return Ok(false),
                None => {
                    return Err(GraphError::Comparator(format!(
                        "{} {} {}: property is a {}",
                        c.property,
                        c.comparator.symbol(),
                        c.value.kind(),
                        stored.kind()
                    )))
                }
            }
        }
        Ok(true)
    }
}
