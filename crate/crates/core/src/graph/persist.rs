//! Snapshot and write-log formats.
//!
//! Snapshot: the 4 bytes `VGDB`, a little-endian `u32` format version, then
//! newline-delimited JSON: one header line, one line per node in handle
//! order, one line per edge in handle order.
//!
//! Write log: newline-delimited JSON merge operations addressed by node key,
//! each batch closed by a `commit` record. Operations after the last commit
//! belong to a torn batch and are discarded on open.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::{GraphData, NodeId};
use super::schema::{EdgeType, NodeKey, NodeLabel};
use super::value::Props;
use super::GraphError;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"VGDB";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format_version: u32,
    pub nodes: usize,
    pub edges: usize,
    /// Label key indexes present in the store.
    pub indexes: Vec<String>,
    /// Byte length of the write log already reflected in this snapshot.
    pub log_offset: u64,
}

#[derive(Serialize, Deserialize)]
struct NodeLine {
    label: NodeLabel,
    props: Props,
}

#[derive(Serialize, Deserialize)]
struct EdgeLine {
    #[serde(rename = "type")]
    edge_type: EdgeType,
    src: u64,
    dst: u64,
    props: Props,
}

fn format_err(offset: u64, reason: impl Into<String>) -> GraphError {
    GraphError::Format {
        offset,
        reason: reason.into(),
    }
}

pub fn write_snapshot(data: &GraphData, path: &Path, log_offset: u64) -> Result<SnapshotHeader, GraphError> {
    let header = SnapshotHeader {
        format_version: SNAPSHOT_VERSION,
        nodes: data.node_count(),
        edges: data.edge_count(),
        indexes: NodeLabel::ALL.iter().map(|l| format!("key:{l}")).collect(),
        log_offset,
    };
    let tmp = tmp_path(path);
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for n in data.nodes() {
            serde_json::to_writer(
                &mut w,
                &NodeLine {
                    label: n.label,
                    props: n.props.clone(),
                },
            )?;
            w.write_all(b"\n")?;
        }
        for e in data.edges() {
            serde_json::to_writer(
                &mut w,
                &EdgeLine {
                    edge_type: e.edge_type,
                    src: e.src.0,
                    dst: e.dst.0,
                    props: e.props.clone(),
                },
            )?;
            w.write_all(b"\n")?;
        }
        let f = w.into_inner().map_err(|e| e.into_error())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(header)
}

pub fn read_snapshot(path: &Path) -> Result<(GraphData, SnapshotHeader), GraphError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    parse_snapshot(&bytes)
}

pub fn parse_snapshot(bytes: &[u8]) -> Result<(GraphData, SnapshotHeader), GraphError> {
    if bytes.len() < 8 {
        return Err(format_err(bytes.len() as u64, "truncated header"));
    }
    if &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(format_err(0, "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(format_err(4, format!("unsupported format version {version}")));
    }
    let mut offset = 8u64;
    let mut lines = bytes[8..].split_inclusive(|b| *b == b'\n');
    let mut next_line = |what: &str, offset: &mut u64| -> Result<&[u8], GraphError> {
        let line = lines
            .next()
            .ok_or_else(|| format_err(*offset, format!("missing {what}")))?;
        let start = *offset;
        *offset += line.len() as u64;
        if !line.ends_with(b"\n") {
            return Err(format_err(start, format!("unterminated {what}")));
        }
        Ok(line)
    };
    let start = offset;
    let header: SnapshotHeader = serde_json::from_slice(next_line("header", &mut offset)?)
        .map_err(|e| format_err(start, format!("header: {e}")))?;
    if header.format_version != version {
        return Err(format_err(start, "header version disagrees with preamble"));
    }
    let mut nodes = Vec::with_capacity(header.nodes);
    for _ in 0..header.nodes {
        let start = offset;
        let line: NodeLine = serde_json::from_slice(next_line("node", &mut offset)?)
            .map_err(|e| format_err(start, format!("node: {e}")))?;
        nodes.push((line.label, line.props));
    }
    let mut edges = Vec::with_capacity(header.edges);
    for _ in 0..header.edges {
        let start = offset;
        let line: EdgeLine = serde_json::from_slice(next_line("edge", &mut offset)?)
            .map_err(|e| format_err(start, format!("edge: {e}")))?;
        edges.push((line.edge_type, NodeId(line.src), NodeId(line.dst), line.props));
    }
    if offset != bytes.len() as u64 {
        return Err(format_err(offset, "trailing bytes after last edge"));
    }
    let data = GraphData::from_parts(nodes, edges).map_err(|e| format_err(offset, e.to_string()))?;
    Ok((data, header))
}

/// A node reference that survives snapshot/replay: label plus key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRef {
    pub label: NodeLabel,
    pub key: NodeKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LogRecord {
    Node {
        label: NodeLabel,
        key: Props,
        props: Props,
    },
    Edge {
        #[serde(rename = "type")]
        edge_type: EdgeType,
        src: NodeRef,
        dst: NodeRef,
        props: Props,
    },
    Commit {
        seq: u64,
    },
}

pub(crate) struct WriteLog {
    file: File,
    len: u64,
    next_seq: u64,
}

impl WriteLog {
    pub fn len(&self) -> u64 {
        self.len
    }

    /// Open (or create) a log, returning the committed batches from
    /// `from_offset` onwards. A torn tail is truncated away.
    pub fn open(path: &Path, from_offset: u64) -> Result<(Self, Vec<Vec<LogRecord>>), GraphError> {
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)?;
        let total = file.metadata()?.len();
        let mut reader = BufReader::new(File::open(path)?);
        let mut committed_end = 0u64;
        let mut pos = 0u64;
        let mut batches = Vec::new();
        let mut pending = Vec::new();
        let mut next_seq = 0;
        let start = if from_offset <= total { from_offset } else { 0 };
        let mut line = String::new();
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            let line_start = pos;
            pos += n as u64;
            if !line.ends_with('\n') {
                break;
            }
            let record: LogRecord = match serde_json::from_str(line.trim_end()) {
                Ok(r) => r,
                Err(e) => {
                    tracing::warn!(offset = line_start, error = %e, "unreadable write-log record, truncating");
                    break;
                }
            };
            match record {
                LogRecord::Commit { seq } => {
                    next_seq = seq + 1;
                    committed_end = pos;
                    if line_start >= start {
                        batches.push(std::mem::take(&mut pending));
                    } else {
                        pending.clear();
                    }
                }
                r => pending.push(r),
            }
        }
        if committed_end < total {
            tracing::warn!(
                discarded = total - committed_end,
                "discarding uncommitted write-log tail"
            );
            file.set_len(committed_end)?;
        }
        Ok((
            WriteLog {
                file,
                len: committed_end,
                next_seq,
            },
            batches,
        ))
    }

    pub fn append_batch(&mut self, records: &[LogRecord]) -> Result<(), GraphError> {
        if records.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        serde_json::to_writer(&mut buf, &LogRecord::Commit { seq: self.next_seq })?;
        buf.push(b'\n');
        self.file.write_all(&buf)?;
        self.file.sync_data()?;
        self.len += buf.len() as u64;
        self.next_seq += 1;
        Ok(())
    }

    /// Append records without a commit marker. Only used to simulate a
    /// writer dying mid-batch.
    #[doc(hidden)]
    pub fn append_torn(&mut self, records: &[LogRecord]) -> Result<(), GraphError> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        self.file.write_all(&buf)?;
        self.file.sync_data()?;
        Ok(())
    }
}

pub(crate) fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}
