use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GraphError;

/// Entity classes of the vulnerability graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeLabel {
    Vulnerability,
    Exploit,
    Weakness,
    Product,
    Vendor,
    Author,
    Domain,
}

impl NodeLabel {
    pub const ALL: [NodeLabel; 7] = [
        NodeLabel::Vulnerability,
        NodeLabel::Exploit,
        NodeLabel::Weakness,
        NodeLabel::Product,
        NodeLabel::Vendor,
        NodeLabel::Author,
        NodeLabel::Domain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeLabel::Vulnerability => "Vulnerability",
            NodeLabel::Exploit => "Exploit",
            NodeLabel::Weakness => "Weakness",
            NodeLabel::Product => "Product",
            NodeLabel::Vendor => "Vendor",
            NodeLabel::Author => "Author",
            NodeLabel::Domain => "Domain",
        }
    }

    /// Names of the identity properties, in key order. Product is the only
    /// composite key.
    pub fn key_properties(self) -> &'static [&'static str] {
        match self {
            NodeLabel::Vulnerability => &["cveID"],
            NodeLabel::Weakness => &["cweID"],
            NodeLabel::Exploit => &["exploitID"],
            NodeLabel::Product => &["name", "vendorName"],
            NodeLabel::Vendor => &["name"],
            NodeLabel::Author => &["name"],
            NodeLabel::Domain => &["url"],
        }
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeLabel {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| GraphError::UnknownLabel(s.to_string()))
    }
}

/// Relationship types with their fixed endpoint labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[allow(non_camel_case_types)]
pub enum EdgeType {
    EXPLOITS,
    AFFECTS,
    BELONGS_TO,
    EXAMPLE_OF,
    WRITES,
    REFERS_TO,
}

impl EdgeType {
    pub const ALL: [EdgeType; 6] = [
        EdgeType::EXPLOITS,
        EdgeType::AFFECTS,
        EdgeType::BELONGS_TO,
        EdgeType::EXAMPLE_OF,
        EdgeType::WRITES,
        EdgeType::REFERS_TO,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::EXPLOITS => "EXPLOITS",
            EdgeType::AFFECTS => "AFFECTS",
            EdgeType::BELONGS_TO => "BELONGS_TO",
            EdgeType::EXAMPLE_OF => "EXAMPLE_OF",
            EdgeType::WRITES => "WRITES",
            EdgeType::REFERS_TO => "REFERS_TO",
        }
    }

    /// Primary `(source label, target label)`.
    pub fn signature(self) -> (NodeLabel, NodeLabel) {
        self.signatures()[0]
    }

    /// All accepted endpoint pairs. WRITES links an author to each exploit
    /// and also to every vulnerability one of their exploits targets, which
    /// is the shape `(ex)-[:EXPLOITS]->(v)<-[:WRITES]-(a:Author)` traverses.
    pub fn signatures(self) -> &'static [(NodeLabel, NodeLabel)] {
        use NodeLabel::*;
        match self {
            EdgeType::EXPLOITS => &[(Exploit, Vulnerability)],
            EdgeType::AFFECTS => &[(Vulnerability, Product)],
            EdgeType::BELONGS_TO => &[(Product, Vendor)],
            EdgeType::EXAMPLE_OF => &[(Vulnerability, Weakness)],
            EdgeType::WRITES => &[(Author, Exploit), (Author, Vulnerability)],
            EdgeType::REFERS_TO => &[(Vulnerability, Domain)],
        }
    }

    pub fn accepts(self, src: NodeLabel, dst: NodeLabel) -> bool {
        self.signatures().contains(&(src, dst))
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeType {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| GraphError::UnknownEdgeType(s.to_string()))
    }
}

/// Identity of a node within its label: one string per key property.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeKey(pub Vec<String>);

impl NodeKey {
    pub fn single(value: impl Into<String>) -> Self {
        NodeKey(vec![value.into()])
    }

    pub fn product(name: impl Into<String>, vendor_name: impl Into<String>) -> Self {
        NodeKey(vec![name.into(), vendor_name.into()])
    }

    pub fn parts(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("/"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip_through_names() {
        for l in NodeLabel::ALL {
            assert_eq!(l.as_str().parse::<NodeLabel>().unwrap(), l);
        }
        assert!(matches!(
            "Bogus".parse::<NodeLabel>(),
            Err(GraphError::UnknownLabel(_))
        ));
        // names are case-sensitive
        assert!("vulnerability".parse::<NodeLabel>().is_err());
    }

    #[test]
    fn edge_signatures() {
        assert_eq!(
            EdgeType::EXPLOITS.signature(),
            (NodeLabel::Exploit, NodeLabel::Vulnerability)
        );
        assert_eq!(
            EdgeType::WRITES.signature(),
            (NodeLabel::Author, NodeLabel::Exploit)
        );
        assert!(EdgeType::WRITES.accepts(NodeLabel::Author, NodeLabel::Vulnerability));
        assert!(!EdgeType::WRITES.accepts(NodeLabel::Exploit, NodeLabel::Author));
        assert!(!EdgeType::AFFECTS.accepts(NodeLabel::Author, NodeLabel::Product));
        for t in EdgeType::ALL {
            assert_eq!(t.as_str().parse::<EdgeType>().unwrap(), t);
        }
    }
}
