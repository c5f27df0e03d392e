use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::Serialize;

use super::config::{SourceConfig, SourceId, Stream};
use super::loader::{self, enqueue, Deferred};
use super::state::{digest, Outcome, PipelineRunState};
use super::PipelineError;
use crate::graph::{GraphData, GraphStore, NodeKey, NodeLabel, WriteBatch};
use crate::ingest::{self, CanonicalVulnRecord, EnrichmentRecord, ExploitRecord, Reject, WeaknessRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunCounts {
    /// Entries the parser turned into records.
    pub parsed: usize,
    /// Entries turned away by parsing, validation or loading.
    pub rejected: usize,
    /// Records actually loaded this run (after the watermark or digest skip).
    pub processed: usize,
    /// Records skipped as already seen.
    pub skipped: usize,
    pub merged_nodes: usize,
    pub merged_edges: usize,
    /// References queued because their CVE is not loaded yet.
    pub deferred: usize,
    /// Previously queued references that could now be applied.
    pub resolved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub source: SourceId,
    pub pass: Stream,
    pub outcome: Outcome,
    pub counts: RunCounts,
    pub duration_ms: u64,
    pub errors: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rejects: Vec<Reject>,
}

impl RunReport {
    fn new(source: SourceId, pass: Stream) -> Self {
        RunReport {
            source,
            pass,
            outcome: Outcome::Success,
            counts: RunCounts::default(),
            duration_ms: 0,
            errors: Vec::new(),
            rejects: Vec::new(),
        }
    }

    fn failed(mut self, started: Instant, error: String) -> Self {
        self.outcome = Outcome::Failed;
        self.errors.push(error);
        self.duration_ms = started.elapsed().as_millis() as u64;
        self
    }
}

/// Called after the core stream merges vulnerabilities. Failures are
/// reported, never rolled back into the graph.
pub trait PostMerge {
    fn vulnerabilities_merged(&mut self, view: &GraphData, cve_ids: &[String]) -> Result<String, String>;
}

/// Per-run environment.
pub struct RunContext {
    pub spool_dir: PathBuf,
    /// Where state is saved after each committed batch.
    pub state_path: Option<PathBuf>,
    /// Stop with [`PipelineError::Halted`] right after this many commits,
    /// before the state file is written. Used to exercise crash recovery.
    pub halt_after_batches: Option<usize>,
    pub clock: Box<dyn Fn() -> DateTime<Utc> + Send + Sync>,
    committed: usize,
}

impl RunContext {
    pub fn new(spool_dir: impl Into<PathBuf>) -> Self {
        RunContext {
            spool_dir: spool_dir.into(),
            state_path: None,
            halt_after_batches: None,
            clock: Box::new(Utc::now),
            committed: 0,
        }
    }

    pub fn with_state_path(mut self, p: impl Into<PathBuf>) -> Self {
        self.state_path = Some(p.into());
        self
    }

    pub fn committed_batches(&self) -> usize {
        self.committed
    }

    fn commit(&mut self, batch: WriteBatch<'_>, report: &mut RunReport) -> Result<(), PipelineError> {
        let summary = batch.commit()?;
        report.counts.merged_nodes += summary.merged_nodes();
        report.counts.merged_edges += summary.merged_edges();
        self.committed += 1;
        if self.halt_after_batches.is_some_and(|n| self.committed >= n) {
            return Err(PipelineError::Halted { batches: self.committed });
        }
        Ok(())
    }

    fn save(&self, state: &PipelineRunState) -> Result<(), PipelineError> {
        match &self.state_path {
            Some(p) => state.save(p),
            None => Ok(()),
        }
    }
}

/// Accepted and rejected records of one batch. Duplicate CVEs are folded
/// into the first occurrence.
pub fn validate_batch(records: Vec<CanonicalVulnRecord>) -> (Vec<CanonicalVulnRecord>, Vec<Reject>) {
    let mut accepted: Vec<CanonicalVulnRecord> = Vec::with_capacity(records.len());
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut rejected = Vec::new();
    for (i, mut r) in records.into_iter().enumerate() {
        if let Err(reason) = r.validate() {
            rejected.push(Reject {
                entry: i + 1,
                id: Some(r.cve_id.clone()),
                reason,
            });
            continue;
        }
        match index.get(&r.cve_id) {
            Some(&at) => accepted[at].absorb(r),
            None => {
                index.insert(r.cve_id.clone(), accepted.len());
                accepted.push(r);
            }
        }
    }
    (accepted, rejected)
}

fn read_source(source: &SourceConfig, ctx: &RunContext) -> Result<Vec<u8>, String> {
    ingest::read_locator(&source.locator(), &ctx.spool_dir).map_err(|e| e.to_string())
}

fn load_reject(report: &mut RunReport, id: &str, reason: String) {
    report.rejects.push(Reject {
        entry: 0,
        id: Some(id.to_string()),
        reason,
    });
}

fn finish(report: &mut RunReport, started: Instant) {
    report.counts.rejected = report.rejects.len();
    if report.outcome != Outcome::Failed && (!report.rejects.is_empty() || !report.errors.is_empty()) {
        report.outcome = Outcome::Partial;
    }
    report.duration_ms = started.elapsed().as_millis() as u64;
}

fn has_cve(data: &GraphData, id: &str) -> bool {
    data.find(NodeLabel::Vulnerability, &NodeKey::single(id)).is_some()
}

/// What a sub-pipeline produced besides its report.
#[derive(Debug, Default)]
pub struct SubOutput {
    /// CVEs merged by an NVD run, and which of them are new to the graph.
    pub merged_cves: Vec<String>,
    pub created_cves: BTreeSet<String>,
}

/// Ingest, transform, validate and load one source as a single batch.
pub fn run_subpipeline(
    source: &SourceConfig,
    state: &mut PipelineRunState,
    store: &GraphStore,
    ctx: &mut RunContext,
) -> Result<(RunReport, SubOutput), PipelineError> {
    let started = Instant::now();
    let mut report = RunReport::new(source.id, Stream::Core);
    report.pass = source.id.stream();
    let mut out = SubOutput::default();
    let bytes = match read_source(source, ctx) {
        Ok(b) => b,
        Err(e) => return Ok((report.failed(started, e), out)),
    };
    let now = (ctx.clock)();
    match source.id {
        SourceId::Nvd => {
            let parsed = match ingest::parse_nvd_feed(&bytes) {
                Ok(p) => p,
                Err(e) => return Ok((report.failed(started, e.to_string()), out)),
            };
            report.counts.parsed = parsed.records.len();
            report.rejects = parsed.rejects;
            let cursor = state.source(SourceId::Nvd).clone();
            let (fresh, old): (Vec<_>, Vec<_>) = parsed
                .records
                .into_iter()
                .partition(|r| cursor.is_new(&r.cve_id, r.last_modified));
            report.counts.skipped = old.len();
            let (accepted, rejected) = validate_batch(fresh);
            report.rejects.extend(rejected);
            let mut batch = store.begin();
            let mut processed = Vec::new();
            for r in &accepted {
                let existed = has_cve(batch.data(), &r.cve_id);
                match loader::load_vulnerability(&mut batch, r) {
                    Ok(()) => {
                        if !existed {
                            out.created_cves.insert(r.cve_id.clone());
                        }
                        processed.push(r);
                    }
                    Err(e) => load_reject(&mut report, &r.cve_id, e),
                }
            }
            report.counts.processed = processed.len();
            report.counts.resolved = loader::resolve_deferred(&mut batch, &mut state.deferred, &mut report.errors);
            ctx.commit(batch, &mut report)?;
            out.merged_cves = processed.iter().map(|r| r.cve_id.clone()).collect();
            state
                .source(SourceId::Nvd)
                .advance(processed.iter().map(|r| (r.cve_id.as_str(), r.last_modified)));
        }
        SourceId::Cwe => {
            let parsed = match ingest::parse_cwe_catalog(&bytes) {
                Ok(p) => p,
                Err(e) => return Ok((report.failed(started, e.to_string()), out)),
            };
            apply_digest_source(&bytes, parsed, source.id, state, store, ctx, &mut report, |r: &WeaknessRecord| &r.cwe_id, |b, r| {
                loader::load_weakness(b, r).map(|_| Vec::new())
            })?;
        }
        SourceId::CveDetails => {
            let parsed = match ingest::parse_cvedetails_export(&bytes) {
                Ok(p) => p,
                Err(e) => return Ok((report.failed(started, e.to_string()), out)),
            };
            apply_digest_source(&bytes, parsed, source.id, state, store, ctx, &mut report, |r: &EnrichmentRecord| &r.cve_id, |b, r| {
                loader::load_enrichment(b, r).map(|d| d.into_iter().collect())
            })?;
        }
        SourceId::Exploitdb => {
            let parsed = match ingest::parse_exploitdb_index(&bytes) {
                Ok(p) => p,
                Err(e) => return Ok((report.failed(started, e.to_string()), out)),
            };
            apply_digest_source(&bytes, parsed, source.id, state, store, ctx, &mut report, |r: &ExploitRecord| &r.exploit_id, |b, r| {
                loader::load_exploit(b, r)
            })?;
        }
    }
    finish(&mut report, started);
    let s = state.source(source.id);
    s.last_run = Some(now);
    s.last_outcome = Some(report.outcome);
    ctx.save(state)?;
    Ok((report, out))
}

/// Sources without per-record timestamps: skip the whole input when its
/// digest matches the last successful load.
#[allow(clippy::too_many_arguments)]
fn apply_digest_source<T>(
    bytes: &[u8],
    parsed: ingest::Parsed<T>,
    id: SourceId,
    state: &mut PipelineRunState,
    store: &GraphStore,
    ctx: &mut RunContext,
    report: &mut RunReport,
    key: impl Fn(&T) -> &str,
    mut load: impl FnMut(&mut WriteBatch<'_>, &T) -> Result<Vec<Deferred>, String>,
) -> Result<(), PipelineError> {
    report.counts.parsed = parsed.records.len();
    report.rejects = parsed.rejects;
    let d = digest(bytes);
    let src = state.source(id);
    let unchanged = src.digest.as_deref() == Some(d.as_str()) && src.last_outcome != Some(Outcome::Failed);
    let mut batch = store.begin();
    if unchanged {
        report.counts.skipped = report.counts.parsed;
    } else {
        for r in &parsed.records {
            match load(&mut batch, r) {
                Ok(deferred) => {
                    report.counts.processed += 1;
                    for item in deferred {
                        report.counts.deferred += 1;
                        enqueue(&mut state.deferred, item);
                    }
                }
                Err(e) => load_reject(report, key(r), e),
            }
        }
    }
    report.counts.resolved = loader::resolve_deferred(&mut batch, &mut state.deferred, &mut report.errors);
    ctx.commit(batch, report)?;
    state.source(id).digest = Some(d);
    Ok(())
}

/// Enrichment restricted to CVEs created by this run's core load.
fn run_core_enrichment(
    source: &SourceConfig,
    created: &BTreeSet<String>,
    state: &mut PipelineRunState,
    store: &GraphStore,
    ctx: &mut RunContext,
) -> Result<RunReport, PipelineError> {
    let started = Instant::now();
    let mut report = RunReport::new(SourceId::CveDetails, Stream::Core);
    let bytes = match read_source(source, ctx) {
        Ok(b) => b,
        Err(e) => return Ok(report.failed(started, e)),
    };
    let parsed = match ingest::parse_cvedetails_export(&bytes) {
        Ok(p) => p,
        Err(e) => return Ok(report.failed(started, e.to_string())),
    };
    let relevant: Vec<&EnrichmentRecord> = parsed.records.iter().filter(|r| created.contains(&r.cve_id)).collect();
    report.counts.parsed = parsed.records.len();
    report.counts.skipped = parsed.records.len() - relevant.len();
    let mut batch = store.begin();
    for r in relevant {
        match loader::load_enrichment(&mut batch, r) {
            Ok(_) => report.counts.processed += 1,
            Err(e) => load_reject(&mut report, &r.cve_id, e),
        }
    }
    ctx.commit(batch, &mut report)?;
    finish(&mut report, started);
    ctx.save(state)?;
    Ok(report)
}

/// Core stream (NVD, then CVE Details enrichment of new CVEs and the
/// post-merge hook), then the supplementary stream (CWE, CVE Details,
/// ExploitDB). Batches serialize through the store's single writer. A
/// failing source only affects its own report.
pub fn run_full(
    sources: &[SourceConfig],
    state: &mut PipelineRunState,
    store: &GraphStore,
    ctx: &mut RunContext,
    mut hook: Option<&mut dyn PostMerge>,
) -> Result<Vec<RunReport>, PipelineError> {
    let enabled = |id: SourceId| sources.iter().find(|s| s.id == id && s.enabled);
    let mut reports = Vec::new();
    if let Some(nvd) = enabled(SourceId::Nvd) {
        let (mut report, out) = run_subpipeline(nvd, state, store, ctx)?;
        let enrichment = match enabled(SourceId::CveDetails) {
            Some(details) if !out.created_cves.is_empty() => {
                Some(run_core_enrichment(details, &out.created_cves, state, store, ctx)?)
            }
            _ => None,
        };
        if let (Some(h), false) = (hook.as_deref_mut(), out.merged_cves.is_empty()) {
            if let Err(e) = h.vulnerabilities_merged(&store.view(), &out.merged_cves) {
                tracing::warn!(error = %e, "embedding update failed");
                report.errors.push(format!("embedding update: {e}"));
            }
        }
        reports.push(report);
        reports.extend(enrichment);
    }
    for id in [SourceId::Cwe, SourceId::CveDetails, SourceId::Exploitdb] {
        if let Some(s) = enabled(id) {
            let (report, _) = run_subpipeline(s, state, store, ctx)?;
            reports.push(report);
        }
    }
    for r in &reports {
        tracing::info!(
            source = %r.source,
            outcome = ?r.outcome,
            processed = r.counts.processed,
            rejected = r.counts.rejected,
            deferred = r.counts.deferred,
            "source run finished"
        );
    }
    Ok(reports)
}
