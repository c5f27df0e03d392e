//! Embedded property-graph store.
//!
//! Readers take an immutable [`GraphView`] (a shared pointer to the current
//! contents) and never block on writers. Writers go through a single
//! [`WriteBatch`] at a time: the batch works on a private copy and publishes
//! it on commit, so readers see either all of a batch or none of it.

mod data;
mod persist;
mod schema;
mod value;

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use thiserror::Error;

pub use data::{key_from_props, key_props, Edge, EdgeId, GraphData, MergeOutcome, Node, NodeId};
pub use persist::{parse_snapshot, LogRecord, NodeRef, SnapshotHeader, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use schema::{EdgeType, NodeKey, NodeLabel};
pub use value::{props, Comparator, Condition, PropertyFilter, Props, Value, ValueKind};

use persist::WriteLog;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown label: {0}")]
    UnknownLabel(String),
    #[error("unknown relationship type: {0}")]
    UnknownEdgeType(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("node not found: {0:?}")]
    NodeNotFound(NodeId),
    #[error("node not found: {0}")]
    KeyNotFound(String),
    #[error("comparator/type mismatch: {0}")]
    Comparator(String),
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type GraphView = Arc<GraphData>;

const SNAPSHOT_FILE: &str = "graph.snapshot";
const LOG_FILE: &str = "graph.wal";

struct Writer {
    log: Option<WriteLog>,
    dir: Option<PathBuf>,
}

/// Shareable handle to a graph. Cloning shares the same store.
#[derive(Clone)]
pub struct GraphStore {
    inner: Arc<Inner>,
}

struct Inner {
    current: RwLock<GraphView>,
    writer: Mutex<Writer>,
}

/// Counts of what a committed batch changed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchSummary {
    pub nodes_created: usize,
    pub nodes_updated: usize,
    pub edges_created: usize,
    pub edges_updated: usize,
}

impl BatchSummary {
    pub fn merged_nodes(&self) -> usize {
        self.nodes_created + self.nodes_updated
    }

    pub fn merged_edges(&self) -> usize {
        self.edges_created + self.edges_updated
    }
}

impl Default for GraphStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl GraphStore {
    pub fn in_memory() -> Self {
        Self::from_data(GraphData::new(), None, None)
    }

    fn from_data(data: GraphData, log: Option<WriteLog>, dir: Option<PathBuf>) -> Self {
        GraphStore {
            inner: Arc::new(Inner {
                current: RwLock::new(Arc::new(data)),
                writer: Mutex::new(Writer { log, dir }),
            }),
        }
    }

    /// Open a durable store in `dir`: restore the snapshot if one exists,
    /// then replay committed batches from the write log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, GraphError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let snap = dir.join(SNAPSHOT_FILE);
        let (mut data, offset) = if snap.exists() {
            let (data, header) = persist::read_snapshot(&snap)?;
            (data, header.log_offset)
        } else {
            (GraphData::new(), 0)
        };
        let (log, batches) = WriteLog::open(&dir.join(LOG_FILE), offset)?;
        for batch in batches {
            for record in batch {
                apply_record(&mut data, &record)?;
            }
        }
        Ok(Self::from_data(data, Some(log), Some(dir.to_path_buf())))
    }

    /// Consistent read view of the current contents.
    pub fn view(&self) -> GraphView {
        self.inner.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Like [`view`](Self::view) but returns `None` instead of waiting while
    /// a commit is being published.
    pub fn try_view(&self) -> Option<GraphView> {
        self.inner.current.try_read().ok().map(|g| g.clone())
    }

    /// Start the (single) write batch. Blocks while another batch is open.
    pub fn begin(&self) -> WriteBatch<'_> {
        let guard = self.inner.writer.lock().unwrap_or_else(|e| e.into_inner());
        let data = (*self.view()).clone();
        WriteBatch {
            store: self,
            guard,
            data,
            records: Vec::new(),
            summary: BatchSummary::default(),
        }
    }

    pub fn merge_node(&self, label: NodeLabel, key: &Props, props: &Props) -> Result<NodeId, GraphError> {
        let mut b = self.begin();
        let id = b.merge_node(label, key, props)?;
        b.commit()?;
        Ok(id)
    }

    pub fn merge_edge(
        &self,
        edge_type: EdgeType,
        src: NodeId,
        dst: NodeId,
        props: &Props,
    ) -> Result<EdgeId, GraphError> {
        let mut b = self.begin();
        let id = b.merge_edge(edge_type, src, dst, props)?;
        b.commit()?;
        Ok(id)
    }

    /// Look up a node by label and key map. Never creates.
    pub fn get_node(&self, label: NodeLabel, key: &Props) -> Result<Option<Node>, GraphError> {
        let key = key_from_props(label, key)?;
        Ok(self.view().find(label, &key).cloned())
    }

    pub fn count(&self, label: NodeLabel) -> usize {
        self.view().count_label(label)
    }

    pub fn count_edges(&self, edge_type: EdgeType) -> usize {
        self.view().count_type(edge_type)
    }

    /// Count by label or relationship type name.
    pub fn count_named(&self, name: &str) -> Result<usize, GraphError> {
        if let Ok(l) = name.parse::<NodeLabel>() {
            return Ok(self.count(l));
        }
        match name.parse::<EdgeType>() {
            Ok(t) => Ok(self.count_edges(t)),
            Err(_) => Err(GraphError::UnknownLabel(name.to_string())),
        }
    }

    pub fn scan(&self, label: NodeLabel, filter: &PropertyFilter) -> Result<Vec<Node>, GraphError> {
        Ok(self.view().scan(label, filter)?.into_iter().cloned().collect())
    }

    /// Write a snapshot of the current contents to `path`.
    pub fn snapshot_write(&self, path: impl AsRef<Path>) -> Result<SnapshotHeader, GraphError> {
        // hold the writer lock so the snapshot sits on a batch boundary
        let w = self.inner.writer.lock().unwrap_or_else(|e| e.into_inner());
        let offset = w.log.as_ref().map_or(0, WriteLog::len);
        persist::write_snapshot(&self.view(), path.as_ref(), offset)
    }

    /// Load a snapshot file into a fresh in-memory store.
    pub fn snapshot_restore(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let (data, _) = persist::read_snapshot(path.as_ref())?;
        Ok(Self::from_data(data, None, None))
    }

    /// For a durable store, write the snapshot into the store directory so
    /// that the next open only replays the log suffix.
    pub fn checkpoint(&self) -> Result<Option<SnapshotHeader>, GraphError> {
        let w = self.inner.writer.lock().unwrap_or_else(|e| e.into_inner());
        let Some(dir) = w.dir.clone() else {
            return Ok(None);
        };
        let offset = w.log.as_ref().map_or(0, WriteLog::len);
        let header = persist::write_snapshot(&self.view(), &dir.join(SNAPSHOT_FILE), offset)?;
        Ok(Some(header))
    }

    pub fn path(&self) -> Option<PathBuf> {
        self.inner
            .writer
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .dir
            .clone()
    }
}

fn apply_record(data: &mut GraphData, record: &LogRecord) -> Result<(), GraphError> {
    match record {
        LogRecord::Node { label, key, props } => {
            data.merge_node(*label, key, props)?;
        }
        LogRecord::Edge {
            edge_type,
            src,
            dst,
            props,
        } => {
            let s = data
                .find(src.label, &src.key)
                .ok_or_else(|| GraphError::KeyNotFound(format!("{} {}", src.label, src.key)))?
                .id;
            let d = data
                .find(dst.label, &dst.key)
                .ok_or_else(|| GraphError::KeyNotFound(format!("{} {}", dst.label, dst.key)))?
                .id;
            data.merge_edge(*edge_type, s, d, props)?;
        }
        LogRecord::Commit { .. } => {}
    }
    Ok(())
}

/// The single open write batch. Dropping it without [`commit`](Self::commit)
/// discards every change.
pub struct WriteBatch<'a> {
    store: &'a GraphStore,
    guard: MutexGuard<'a, Writer>,
    data: GraphData,
    records: Vec<LogRecord>,
    summary: BatchSummary,
}

impl WriteBatch<'_> {
    /// State as modified so far by this batch.
    pub fn data(&self) -> &GraphData {
        &self.data
    }

    pub fn merge_node(&mut self, label: NodeLabel, key: &Props, props: &Props) -> Result<NodeId, GraphError> {
        let (id, outcome) = self.data.merge_node(label, key, props)?;
        match outcome {
            MergeOutcome::Created => self.summary.nodes_created += 1,
            MergeOutcome::Updated => self.summary.nodes_updated += 1,
            MergeOutcome::Unchanged => {}
        }
        if outcome.changed() {
            self.records.push(LogRecord::Node {
                label,
                key: key.clone(),
                props: props.clone(),
            });
        }
        Ok(id)
    }

    pub fn merge_edge(
        &mut self,
        edge_type: EdgeType,
        src: NodeId,
        dst: NodeId,
        props: &Props,
    ) -> Result<EdgeId, GraphError> {
        let (id, outcome) = self.data.merge_edge(edge_type, src, dst, props)?;
        match outcome {
            MergeOutcome::Created => self.summary.edges_created += 1,
            MergeOutcome::Updated => self.summary.edges_updated += 1,
            MergeOutcome::Unchanged => {}
        }
        if outcome.changed() {
            let node_ref = |id: NodeId| {
                let n = self.data.node(id).expect("endpoint checked by merge_edge");
                NodeRef {
                    label: n.label,
                    key: n.key.clone(),
                }
            };
            let (src, dst) = (node_ref(src), node_ref(dst));
            self.records.push(LogRecord::Edge {
                edge_type,
                src,
                dst,
                props: props.clone(),
            });
        }
        Ok(id)
    }

    pub fn find(&self, label: NodeLabel, key: &NodeKey) -> Option<NodeId> {
        self.data.find(label, key).map(|n| n.id)
    }

    pub fn summary(&self) -> BatchSummary {
        self.summary
    }

    /// Make the batch durable (when the store has a log) and visible.
    pub fn commit(mut self) -> Result<BatchSummary, GraphError> {
        if let Some(log) = self.guard.log.as_mut() {
            log.append_batch(&self.records)?;
        }
        let data = std::mem::take(&mut self.data);
        *self
            .store
            .inner
            .current
            .write()
            .unwrap_or_else(|e| e.into_inner()) = Arc::new(data);
        Ok(self.summary)
    }

    /// Write this batch's records to the log without a commit marker and
    /// without publishing. Simulates a writer killed mid-batch.
    #[doc(hidden)]
    pub fn abandon_torn(mut self) -> Result<(), GraphError> {
        if let Some(log) = self.guard.log.as_mut() {
            log.append_torn(&self.records)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cve(id: &str) -> Props {
        props([("cveID", id)])
    }

    #[test]
    fn get_node_absent_and_present() {
        let s = GraphStore::in_memory();
        assert!(s
            .get_node(NodeLabel::Vulnerability, &cve("CVE-9999-0000"))
            .unwrap()
            .is_none());
        s.merge_node(NodeLabel::Vulnerability, &cve("CVE-2017-0144"), &Props::new())
            .unwrap();
        let n = s
            .get_node(NodeLabel::Vulnerability, &cve("CVE-2017-0144"))
            .unwrap()
            .unwrap();
        assert_eq!(n.get("cveID"), Some(&Value::from("CVE-2017-0144")));
        assert_eq!(s.count(NodeLabel::Vulnerability), 1);
    }

    #[test]
    fn weakness_name_round_trips() {
        let s = GraphStore::in_memory();
        s.merge_node(
            NodeLabel::Weakness,
            &props([("cweID", "CWE-20")]),
            &props([("name", "Improper Input Validation")]),
        )
        .unwrap();
        let n = s
            .get_node(NodeLabel::Weakness, &props([("cweID", "CWE-20")]))
            .unwrap()
            .unwrap();
        assert_eq!(n.get("name").unwrap().as_str(), Some("Improper Input Validation"));
    }

    #[test]
    fn dropped_batch_is_invisible() {
        let s = GraphStore::in_memory();
        {
            let mut b = s.begin();
            b.merge_node(NodeLabel::Vulnerability, &cve("CVE-1"), &Props::new())
                .unwrap();
            assert_eq!(s.count(NodeLabel::Vulnerability), 0);
        }
        assert_eq!(s.count(NodeLabel::Vulnerability), 0);
    }

    #[test]
    fn readers_see_batch_boundaries() {
        let s = GraphStore::in_memory();
        let before = s.view();
        let mut b = s.begin();
        for i in 0..10 {
            b.merge_node(NodeLabel::Vulnerability, &cve(&format!("CVE-2020-{i:04}")), &Props::new())
                .unwrap();
        }
        assert_eq!(s.view().node_count(), 0);
        b.commit().unwrap();
        assert_eq!(before.node_count(), 0);
        assert_eq!(s.view().node_count(), 10);
    }

    #[test]
    fn count_by_name() {
        let s = GraphStore::in_memory();
        assert_eq!(s.count_named("Vulnerability").unwrap(), 0);
        assert_eq!(s.count_named("EXPLOITS").unwrap(), 0);
        assert!(s.count_named("Bogus").is_err());
    }

    #[test]
    fn scan_orders_by_key_and_filters() {
        let s = GraphStore::in_memory();
        for (id, score) in [("CVE-2019-3", 1.0), ("CVE-2017-0144", 3.9), ("CVE-2018-1", 2.0)] {
            s.merge_node(
                NodeLabel::Vulnerability,
                &cve(id),
                &props([("v3exploitabilityScore", score)]),
            )
            .unwrap();
        }
        s.merge_node(NodeLabel::Vulnerability, &cve("CVE-2020-9"), &Props::new())
            .unwrap();
        let all = s
            .scan(
                NodeLabel::Vulnerability,
                &PropertyFilter::all().and(Condition::new("v3exploitabilityScore", Comparator::Ge, 0i64)),
            )
            .unwrap();
        let ids: Vec<_> = all.iter().map(|n| n.key.to_string()).collect();
        assert_eq!(ids, ["CVE-2017-0144", "CVE-2018-1", "CVE-2019-3"]);
        let y = s
            .scan(
                NodeLabel::Vulnerability,
                &PropertyFilter::all().and(Condition::new("cveID", Comparator::Contains, "2017")),
            )
            .unwrap();
        assert_eq!(y.len(), 1);
    }
}
