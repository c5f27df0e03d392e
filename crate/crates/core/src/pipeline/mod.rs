//! Orchestration of source loads: incremental runs per source, the core
//! and supplementary streams, the deferred reference queue and scheduling.
//!
//! CVE Details shows up in both streams. The core pass applies enrichment
//! only to CVEs the same run just created; the supplementary pass is the bulk
//! refresh and is skipped when the export has not changed.

mod config;
mod loader;
mod run;
mod schedule;
mod state;

use thiserror::Error;

pub use config::{
    parse_interval, ApiSettings, Config, EmbeddingConfig, ScheduleConfig, SourceConfig, SourceId, Stream,
    DEFAULT_INTERVAL, MIN_INTERVAL,
};
pub use loader::{load_enrichment, load_exploit, load_vulnerability, load_weakness, Deferred};
pub use run::{run_full, run_subpipeline, validate_batch, PostMerge, RunContext, RunCounts, RunReport, SubOutput};
pub use schedule::{run_every, Scheduler, Tick};
pub use state::{digest, Outcome, PipelineRunState, SourceState};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("state file: {0}")]
    State(String),
    #[error("graph: {0}")]
    Graph(#[from] crate::graph::GraphError),
    #[error("run halted after {batches} committed batches")]
    Halted { batches: usize },
}
