mod cli;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use tracing::level_filters::LevelFilter;
use vulgd_core::embedder::{
    benchmark_pca, cost_table_csv, refresh_tiers, year_descriptions, CostRow, CountingAlloc, Embedder, ModelId,
    TierConfig, TierMaintainer, TierStore,
};
use vulgd_core::export::{export_nodes, export_relationships, graph_stats, parse_edge_type, parse_label, parse_props, ExportFormat};
use vulgd_core::graph::GraphStore;
use vulgd_core::pipeline::{
    run_full, run_subpipeline, Config, Outcome, PipelineError, PipelineRunState, PostMerge, RunContext, RunReport,
    SourceConfig, SourceId,
};
use vulgd_core::query::run_query;

use cli::{Cli, Command, ExportFormatArg, QueryFormat, RunFlags, TableFormat};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

const FIXTURE_FILES: [(SourceId, &str); 4] = [
    (SourceId::Nvd, "nvd.jsonl"),
    (SourceId::Cwe, "cwe.jsonl"),
    (SourceId::CveDetails, "cvedetails.jsonl"),
    (SourceId::Exploitdb, "exploitdb.csv"),
];

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(false)
        .with_target(false)
        .with_max_level(if cli.quiet { LevelFilter::WARN } else { LevelFilter::INFO })
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {line}");
            ExitCode::from(1)
        }
    }
}

/// Resolved configuration and on-disk layout.
struct Env {
    config: Config,
    data_dir: PathBuf,
}

impl Env {
    fn load(cli: &Cli) -> Result<Self> {
        let config = match (&cli.config, &cli.fixtures) {
            (Some(path), _) => Config::load(path)?,
            (None, Some(dir)) => fixture_config(dir)?,
            (None, None) => Config::default(),
        };
        let data_dir = cli
            .store_path
            .clone()
            .or_else(|| config.data_dir.clone())
            .unwrap_or_else(|| PathBuf::from("vulgd-data"));
        Ok(Env { config, data_dir })
    }

    fn graph_dir(&self) -> PathBuf {
        self.data_dir.join("graph")
    }

    fn state_path(&self) -> PathBuf {
        self.data_dir.join("state.json")
    }

    fn open_store(&self) -> Result<GraphStore> {
        let dir = self.graph_dir();
        GraphStore::open(&dir).with_context(|| format!("opening graph store {}", dir.display()))
    }

    fn tiers(&self) -> Arc<TierStore> {
        Arc::new(TierStore::new(self.data_dir.join("embeddings")))
    }

    fn embedder(&self) -> Embedder {
        match &self.config.embedding.provider_command {
            Some(cmd) => Embedder::with_provider(cmd.clone()),
            None => Embedder::local(),
        }
    }

    fn tier_config(&self) -> Result<TierConfig> {
        let e = &self.config.embedding;
        let models = e
            .models
            .iter()
            .map(|m| m.parse::<ModelId>().map_err(|err| anyhow!("embedding.models: {err}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(TierConfig {
            models,
            alpha: e.alpha,
            beta: e.beta,
        })
    }

    fn sources(&self) -> Result<Vec<SourceConfig>> {
        let sources = self.config.resolved_sources();
        if sources.is_empty() {
            bail!("no sources configured; pass --config or --fixtures");
        }
        Ok(sources)
    }
}

/// A fixture directory's own config, or one source per known file name.
fn fixture_config(dir: &Path) -> Result<Config> {
    let toml = dir.join("vulgd.toml");
    if toml.exists() {
        return Ok(Config::load(&toml)?);
    }
    let sources: Vec<SourceConfig> = FIXTURE_FILES
        .iter()
        .filter(|(_, f)| dir.join(f).exists())
        .map(|(id, f)| SourceConfig::new(*id, dir.join(f).to_string_lossy()))
        .collect();
    if sources.is_empty() {
        bail!("no source files found in {}", dir.display());
    }
    Ok(Config {
        sources,
        base_dir: dir.to_path_buf(),
        ..Config::default()
    })
}

fn run(cli: Cli) -> Result<()> {
    let env = Env::load(&cli)?;
    match cli.command {
        Command::Ingest { source, run } => ingest(&env, source, &run),
        Command::PipelineRun { run } => pipeline_run(&env, &run),
        Command::Schedule { interval, serve, port } => {
            let interval = interval.unwrap_or(env.config.schedule.interval);
            serve_and_schedule(&env, serve.then_some((None, port)), Some(interval))
        }
        Command::Serve {
            port,
            bind,
            schedule,
            interval,
        } => {
            let interval = schedule.then(|| interval.unwrap_or(env.config.schedule.interval));
            serve_and_schedule(&env, Some((bind, port)), interval)
        }
        Command::Query { text, format, header } => query(&env, &text, format, header),
        Command::Export {
            label,
            rel_type,
            props,
            format,
            output,
        } => export(&env, label, rel_type, &props, format, output),
        Command::EmbedBuild { year, rebuild } => embed_build(&env, &year, rebuild),
        Command::EmbedBench {
            dims,
            rows,
            seed,
            format,
        } => embed_bench(&dims, rows, seed, format),
        Command::Stats { format } => stats(&env, format),
    }
}

fn context(env: &Env, flags: &RunFlags) -> RunContext {
    let mut ctx = RunContext::new(env.data_dir.join("spool")).with_state_path(env.state_path());
    ctx.halt_after_batches = flags.halt_after_batches;
    ctx
}

fn load_state(env: &Env) -> Result<PipelineRunState> {
    let path = env.state_path();
    if path.exists() {
        Ok(PipelineRunState::load(&path)?)
    } else {
        Ok(PipelineRunState::default())
    }
}

/// Reports go to stdout without their timings, which are logged instead.
fn print_reports(reports: &[RunReport]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    for r in reports {
        tracing::info!(source = %r.source, outcome = ?r.outcome, duration_ms = r.duration_ms, "source finished");
        let mut v = serde_json::to_value(r)?;
        if let Some(m) = v.as_object_mut() {
            m.remove("duration_ms");
        }
        writeln!(out, "{v}")?;
    }
    Ok(())
}

fn failed_sources(reports: &[RunReport]) -> Result<()> {
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| r.outcome == Outcome::Failed)
        .map(|r| r.source.to_string())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        bail!("failed sources: {}", failed.join(", "))
    }
}

/// A halt request simulates a crash: the process dies without unwinding.
fn halted<T>(r: Result<T, PipelineError>) -> Result<T> {
    match r {
        Err(PipelineError::Halted { batches }) => {
            tracing::warn!(batches, "halting as requested");
            std::process::abort()
        }
        other => Ok(other?),
    }
}

fn ingest(env: &Env, source: SourceId, flags: &RunFlags) -> Result<()> {
    let sources = env.sources()?;
    let Some(cfg) = sources.iter().find(|s| s.id == source) else {
        bail!("source {source} is not configured");
    };
    let store = env.open_store()?;
    let mut state = load_state(env)?;
    let mut ctx = context(env, flags);
    let (report, _) = halted(run_subpipeline(cfg, &mut state, &store, &mut ctx))?;
    let reports = [report];
    print_reports(&reports)?;
    failed_sources(&reports)
}

fn run_pipeline_once(env: &Env, store: &GraphStore, flags: &RunFlags) -> Result<Vec<RunReport>> {
    let sources = env.sources()?;
    let mut state = load_state(env)?;
    let mut ctx = context(env, flags);
    let mut maintainer = if env.config.embedding.enabled {
        Some(TierMaintainer::new(env.tiers(), env.embedder(), env.tier_config()?))
    } else {
        None
    };
    let hook = maintainer.as_mut().map(|m| m as &mut dyn PostMerge);
    let reports = halted(run_full(&sources, &mut state, store, &mut ctx, hook))?;
    for r in maintainer.iter().flat_map(|m| &m.reports) {
        tracing::info!(year = r.year, model = %r.model, rows = r.rows, appended = r.appended, replaced = r.replaced, "tiers updated");
    }
    Ok(reports)
}

fn pipeline_run(env: &Env, flags: &RunFlags) -> Result<()> {
    let store = env.open_store()?;
    let reports = run_pipeline_once(env, &store, flags)?;
    print_reports(&reports)?;
    failed_sources(&reports)
}

fn serve_and_schedule(env: &Env, serve: Option<(Option<String>, Option<u16>)>, interval: Option<Duration>) -> Result<()> {
    if let Some(i) = interval {
        if i < vulgd_core::pipeline::MIN_INTERVAL {
            bail!("schedule interval must be at least 1 minute, got {}s", i.as_secs());
        }
    }
    let store = env.open_store()?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let stop = Arc::new(AtomicBool::new(false));
        let scheduler = interval.map(|interval| {
            let store = store.clone();
            let env = Env {
                config: env.config.clone(),
                data_dir: env.data_dir.clone(),
            };
            let stop = stop.clone();
            tokio::task::spawn_blocking(move || {
                tracing::info!(interval_s = interval.as_secs(), "scheduler started");
                vulgd_core::pipeline::run_every(interval, stop, move || {
                    match run_pipeline_once(&env, &store, &RunFlags { halt_after_batches: None }) {
                        Ok(reports) => {
                            for r in &reports {
                                tracing::info!(source = %r.source, outcome = ?r.outcome, processed = r.counts.processed, "scheduled run");
                            }
                        }
                        Err(e) => tracing::error!(error = %format!("{e:#}"), "scheduled run failed"),
                    }
                })
            })
        });
        let server = match serve {
            Some((bind, port)) => {
                let mut settings = env.config.api.clone();
                if let Some(b) = bind {
                    settings.bind = b;
                }
                if let Some(p) = port {
                    settings.port = p;
                }
                let addr = format!("{}:{}", settings.bind, settings.port);
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                tracing::info!(addr = %listener.local_addr()?, "serving");
                let state = vulgd_api::AppState::new(store.clone(), env.tiers(), settings);
                Some(tokio::spawn(vulgd_api::serve(listener, state, async {
                    let _ = tokio::signal::ctrl_c().await;
                })))
            }
            None => None,
        };
        match server {
            Some(s) => s.await??,
            None => tokio::signal::ctrl_c().await?,
        }
        tracing::info!("shutting down");
        stop.store(true, Ordering::Release);
        if let Some(s) = scheduler {
            s.await??;
        }
        Ok(())
    })
}

fn query(env: &Env, text: &str, format: QueryFormat, header: bool) -> Result<()> {
    let store = env.open_store()?;
    let table = run_query(text, &store.view())?;
    let mut out = std::io::stdout().lock();
    match format {
        QueryFormat::Json => writeln!(out, "{}", serde_json::to_string(&table)?)?,
        QueryFormat::Tsv => {
            if header {
                writeln!(out, "{}", table.columns.join("\t"))?;
            }
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|v| v.render()).collect();
                writeln!(out, "{}", cells.join("\t"))?;
            }
        }
    }
    Ok(())
}

fn export(
    env: &Env,
    label: Option<String>,
    rel_type: Option<String>,
    props: &[String],
    format: ExportFormatArg,
    output: Option<PathBuf>,
) -> Result<()> {
    let format = match format {
        ExportFormatArg::Csv => ExportFormat::Csv,
        ExportFormatArg::Json => ExportFormat::Json,
    };
    let store = env.open_store()?;
    let g = store.view();
    let body = match (label, rel_type) {
        (Some(l), _) => export_nodes(&g, parse_label(&l)?, &parse_props(props)?, format)?,
        (None, Some(t)) => {
            let props = if props.is_empty() { Vec::new() } else { parse_props(props)? };
            export_relationships(&g, parse_edge_type(&t)?, &props, format)?
        }
        (None, None) => unreachable!("clap requires one of the two"),
    };
    match output {
        Some(path) => std::fs::write(&path, &body).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(&body)?,
    }
    Ok(())
}

fn embed_build(env: &Env, years: &[i32], rebuild: bool) -> Result<()> {
    let store = env.open_store()?;
    let g = store.view();
    let ids: Option<Vec<String>> = if years.is_empty() {
        None
    } else {
        let mut ids = Vec::new();
        for &y in years {
            let found = year_descriptions(&g, y);
            if found.is_empty() {
                bail!("no vulnerabilities with descriptions for {y}");
            }
            ids.extend(found.into_iter().map(|(id, _)| id));
        }
        Some(ids)
    };
    let reports = refresh_tiers(&env.tiers(), &g, &env.embedder(), &env.tier_config()?, ids.as_deref(), rebuild)?;
    let mut out = std::io::stdout().lock();
    for r in &reports {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

fn embed_bench(dims: &[usize], rows: usize, seed: u64, format: TableFormat) -> Result<()> {
    let table = benchmark_pca(dims, rows, seed)?;
    if table.iter().any(|r| !r.peak_mem_measured) {
        tracing::warn!("peak memory is estimated, not measured");
    }
    let mut out = std::io::stdout().lock();
    match format {
        TableFormat::Csv => write!(out, "{}", cost_table_csv(&table))?,
        TableFormat::Json => writeln!(out, "{}", serde_json::to_string(&table)?)?,
        TableFormat::Table => write!(out, "{}", cost_table_text(&table))?,
    }
    Ok(())
}

fn cost_table_text(rows: &[CostRow]) -> String {
    let mut s = format!("{:>5} {:>12} {:>10} {:>14}\n", "dim", "storage (MB)", "time (ms)", "peak mem (MB)");
    for r in rows {
        s += &format!(
            "{:>5} {:>12.3} {:>10.3} {:>14.3}\n",
            r.dim,
            r.storage_mb(),
            r.time_ms,
            r.peak_mem_mb()
        );
    }
    s
}

fn stats(env: &Env, format: TableFormat) -> Result<()> {
    let store = env.open_store()?;
    let s = graph_stats(&store.view());
    let mut out = std::io::stdout().lock();
    match format {
        TableFormat::Table => write!(out, "{s}")?,
        TableFormat::Json => writeln!(out, "{}", serde_json::to_string(&s)?)?,
        TableFormat::Csv => {
            writeln!(out, "kind,name,count")?;
            for (k, v) in &s.nodes {
                writeln!(out, "node,{k},{v}")?;
            }
            for (k, v) in &s.relationships {
                writeln!(out, "relationship,{k},{v}")?;
            }
            for (k, v) in &s.cves_per_year {
                writeln!(out, "year,{k},{v}")?;
            }
        }
    }
    Ok(())
}
