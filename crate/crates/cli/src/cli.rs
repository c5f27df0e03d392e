use std::path::PathBuf;
use std::time::Duration;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use vulgd_core::pipeline::{parse_interval, SourceId};

#[derive(Debug, Parser)]
#[command(name = "vulgd", version, about = "Vulnerability graph database operator tool")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Data directory holding the graph, run state and embedding tiers.
    #[arg(long, global = true, value_name = "DIR")]
    pub store_path: Option<PathBuf>,

    /// Directory of offline source files; its vulgd.toml is used when present.
    #[arg(long, global = true, value_name = "DIR", conflicts_with = "config")]
    pub fixtures: Option<PathBuf>,

    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a single source.
    Ingest {
        #[arg(long, value_parser = parse_source)]
        source: SourceId,
        #[command(flatten)]
        run: RunFlags,
    },
    /// One full run: the core stream, then the supplementary stream.
    PipelineRun {
        #[command(flatten)]
        run: RunFlags,
    },
    /// Run the pipeline on an interval until interrupted.
    Schedule {
        #[arg(long, value_parser = parse_duration)]
        interval: Option<Duration>,
        /// Serve the API from the same process.
        #[arg(long)]
        serve: bool,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Serve the HTTP API until interrupted.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bind: Option<String>,
        /// Also run the pipeline scheduler.
        #[arg(long)]
        schedule: bool,
        #[arg(long, value_parser = parse_duration, requires = "schedule")]
        interval: Option<Duration>,
    },
    /// Run a read-only Cypher query.
    Query {
        text: String,
        #[arg(long, value_enum, default_value_t = QueryFormat::Tsv)]
        format: QueryFormat,
        /// Print the column names first (tsv only).
        #[arg(long)]
        header: bool,
    },
    /// Export nodes of one label or relationships of one type.
    #[command(group(ArgGroup::new("what").required(true).args(["label", "rel_type"])))]
    Export {
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        rel_type: Option<String>,
        /// Property names, comma-separated or repeated.
        #[arg(long)]
        props: Vec<String>,
        #[arg(long, value_enum, default_value_t = ExportFormatArg::Csv)]
        format: ExportFormatArg,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Build or refresh embedding tiers.
    EmbedBuild {
        /// Restrict to these years.
        #[arg(long, value_delimiter = ',')]
        year: Vec<i32>,
        /// Refit the reduction models instead of reusing them.
        #[arg(long)]
        rebuild: bool,
    },
    /// Measure PCA storage, time and memory cost per dimensionality.
    EmbedBench {
        #[arg(long, value_delimiter = ',', default_values_t = vulgd_core::embedder::DEFAULT_DIMS)]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        rows: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
        format: TableFormat,
    },
    /// Node and relationship counts, and CVEs per year.
    Stats {
        #[arg(long, value_enum, default_value_t = TableFormat::Table)]
        format: TableFormat,
    },
}

#[derive(Debug, Args)]
pub struct RunFlags {
    /// Abort the process after this many committed batches.
    #[arg(long, hide = true)]
    pub halt_after_batches: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryFormat {
    Tsv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Table,
    Csv,
    Json,
}

fn parse_source(s: &str) -> Result<SourceId, String> {
    s.parse()
}

fn parse_duration(s: &str) -> Result<Duration, String> {
    parse_interval(s)
}
