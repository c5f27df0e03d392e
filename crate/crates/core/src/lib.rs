//! Vulnerability knowledge graph: an embedded property-graph store fed by a
//! multi-source ingest pipeline, a read-only Cypher subset, and tiered
//! description embeddings.

pub mod embedder;
pub mod export;
pub mod graph;
pub mod ingest;
pub mod pipeline;
pub mod query;
