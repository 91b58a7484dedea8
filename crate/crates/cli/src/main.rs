//! `hdr`: run research synchronously, operate workers, inspect tasks.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use hdr_core::gateway::{Clock, SystemClock};
use hdr_core::report::{render_markdown, QualityWeights, ReportDocument};
use hdr_runtime::pipeline::stage_name;
use hdr_runtime::service::{serve, ServiceState};
use hdr_runtime::store::QueueSettings;
use hdr_runtime::worker::{EnvFactory, ProviderFactory, ScriptFactory, WorkerPool, WorkerSettings};
use hdr_runtime::{
    execute, MemoryStore, NoopObserver, PipelineConfig, RecordStore, ResearchTask, RunRecord, Store,
};

const EXIT_OK: u8 = 0;
const EXIT_FAILURE: u8 = 1;
const EXIT_DEGRADED: u8 = 2;
const EXIT_UNKNOWN_ID: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "hdr", version, about = "Hypothesis-driven deep research")]
struct Cli {
    /// SQLite database file (HDR_DB_PATH takes precedence).
    #[arg(long, global = true)]
    db: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Json,
}

#[derive(clap::Args)]
struct RunOptions {
    /// Replay a provider script instead of calling live providers.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Search depth (levels); defaults to the complexity recommendation.
    #[arg(long)]
    d_max: Option<usize>,
    /// Gap-analysis iterations.
    #[arg(long, default_value_t = hdr_core::gap::DEFAULT_MAX_ITERATIONS)]
    max_iterations: usize,
    /// Research date, YYYY-MM-DD (default: today).
    #[arg(long)]
    now: Option<NaiveDate>,
    /// Quality weights alpha,beta,gamma (completeness, accuracy, traceability).
    #[arg(long, value_delimiter = ',', num_args = 3)]
    weights: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Research a query now, without the queue.
    Run {
        #[arg(long)]
        query: String,
        #[command(flatten)]
        opts: RunOptions,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Background material for hypothesis generation.
        #[arg(long)]
        context: Option<String>,
    },
    /// Queue a query for the workers.
    Enqueue {
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 0)]
        priority: i64,
    },
    /// Run a worker pool against the queue.
    Worker {
        #[arg(long, default_value_t = 1)]
        concurrency: usize,
        #[command(flatten)]
        opts: RunOptions,
        /// Exit once nothing is queued or running.
        #[arg(long)]
        drain: bool,
        /// Seconds without a heartbeat before a task is retried
        /// (HDR_HEARTBEAT_TIMEOUT_SECS takes precedence).
        #[arg(long)]
        heartbeat_timeout: Option<u64>,
    },
    /// Show a task's state, stage and attempt.
    Status { id: i64 },
    /// Print a completed task's report.
    Report {
        id: i64,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
    },
    /// Print a task's decision log.
    Log { id: i64 },
    /// Inspect the queue.
    Queue {
        #[command(subcommand)]
        action: QueueAction,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
    },
}

#[derive(Subcommand)]
enum QueueAction {
    /// List tasks in claim order.
    List,
}

/// An error carrying its exit code.
struct Exit(u8, anyhow::Error);

fn fail(e: anyhow::Error) -> Exit {
    Exit(EXIT_FAILURE, e)
}

fn db_path(flag: Option<PathBuf>) -> Option<PathBuf> {
    std::env::var_os("HDR_DB_PATH").map(PathBuf::from).or(flag)
}

fn open_store(flag: Option<PathBuf>, settings: QueueSettings) -> Result<Store, Exit> {
    let path = db_path(flag).unwrap_or_else(|| PathBuf::from("hdr.db"));
    Store::open(&path)
        .map(|s| s.with_settings(settings))
        .with_context(|| format!("opening {}", path.display()))
        .map_err(fail)
}

fn pipeline_config(opts: &RunOptions, context: Option<String>) -> Result<PipelineConfig, Exit> {
    let now = opts.now.unwrap_or_else(|| SystemClock.now().date_naive());
    let mut config = PipelineConfig::new(now);
    if let Some(d) = opts.d_max {
        if d == 0 {
            return Err(Exit(EXIT_USAGE, anyhow!("--d-max must be at least 1")));
        }
        config.d_max = Some(d);
    }
    config.max_iterations = opts.max_iterations;
    if let Some(w) = &opts.weights {
        config.weights =
            QualityWeights::new(w[0], w[1], w[2]).map_err(|e| Exit(EXIT_USAGE, e.into()))?;
    }
    config.context = context;
    Ok(config)
}

fn factory(script: Option<&Path>) -> Arc<dyn ProviderFactory> {
    match script {
        Some(p) => Arc::new(ScriptFactory {
            path: p.to_path_buf(),
        }),
        None => Arc::new(EnvFactory),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Exit> {
    match out {
        Some(p) => std::fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(fail),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| fail(e.into()))
        }
    }
}

fn render(doc: &ReportDocument, json: &str, format: Format, config: &PipelineConfig) -> String {
    match format {
        Format::Json => json.to_string(),
        Format::Md => render_markdown(doc, &config.templates),
    }
}

fn cmd_run(
    db: Option<PathBuf>,
    query: &str,
    opts: &RunOptions,
    format: Format,
    out: Option<&Path>,
    context: Option<String>,
) -> Result<u8, Exit> {
    if query.trim().is_empty() {
        return Err(Exit(EXIT_USAGE, anyhow!("--query must not be empty")));
    }
    let config = pipeline_config(opts, context)?;
    let task = ResearchTask::detached(query, SystemClock.now());
    let providers = factory(opts.script.as_deref())
        .providers(&task)
        .map_err(|e| fail(anyhow!(e)))?;
    let store: Box<dyn RecordStore> = match db_path(db) {
        Some(p) => Box::new(
            Store::open(&p)
                .with_context(|| format!("opening {}", p.display()))
                .map_err(fail)?,
        ),
        None => Box::new(MemoryStore::new()),
    };
    let output = execute(
        &task,
        &providers,
        &config,
        store.as_ref(),
        &mut NoopObserver,
        SystemClock.now(),
    )
    .map_err(|e| fail(e.into()))?;
    let json = output.report.to_json();
    emit(&render(&output.report, &json, format, &config), out)?;
    if output.record.degraded {
        eprintln!("warning: gap analysis was cut short; report is degraded");
        return Ok(EXIT_DEGRADED);
    }
    Ok(EXIT_OK)
}

fn queue_settings(timeout_flag: Option<u64>) -> Result<QueueSettings, Exit> {
    let mut s = QueueSettings::default();
    let from_env = match std::env::var("HDR_HEARTBEAT_TIMEOUT_SECS") {
        Ok(v) => Some(
            v.parse::<u64>()
                .map_err(|e| Exit(EXIT_USAGE, anyhow!("HDR_HEARTBEAT_TIMEOUT_SECS={v:?}: {e}")))?,
        ),
        Err(_) => None,
    };
    if let Some(secs) = from_env.or(timeout_flag) {
        s.heartbeat_timeout = Duration::from_secs(secs);
    }
    Ok(s)
}

fn task_or_exit(store: &Store, id: i64) -> Result<ResearchTask, Exit> {
    store
        .task(id)
        .map_err(|e| fail(e.into()))?
        .ok_or_else(|| Exit(EXIT_UNKNOWN_ID, anyhow!("no task {id}")))
}

fn dispatch(cli: Cli) -> Result<u8, Exit> {
    let clock = SystemClock;
    match cli.command {
        Command::Run {
            query,
            opts,
            format,
            out,
            context,
        } => cmd_run(cli.db, &query, &opts, format, out.as_deref(), context),
        Command::Enqueue { query, priority } => {
            let store = open_store(cli.db, QueueSettings::default())?;
            let id = store
                .enqueue(&query, priority, clock.now())
                .map_err(|e| match e {
                    hdr_runtime::QueueError::EmptyQuery => Exit(EXIT_USAGE, e.into()),
                    e => fail(e.into()),
                })?;
            println!("{id}");
            Ok(EXIT_OK)
        }
        Command::Worker {
            concurrency,
            opts,
            drain,
            heartbeat_timeout,
        } => {
            let store = open_store(cli.db, queue_settings(heartbeat_timeout)?)?;
            let pool = WorkerPool {
                store: Arc::new(store),
                factory: factory(opts.script.as_deref()),
                config: Arc::new(pipeline_config(&opts, None)?),
                clock: Arc::new(SystemClock),
                settings: WorkerSettings {
                    concurrency,
                    drain,
                    ..WorkerSettings::default()
                },
                name: format!("worker-{}", std::process::id()),
            };
            let report = pool.run(&AtomicBool::new(false));
            eprintln!(
                "completed {}, failed {}, lost {}",
                report.completed.len(),
                report.failed.len(),
                report.lost.len()
            );
            Ok(if report.failed.is_empty() {
                EXIT_OK
            } else {
                EXIT_FAILURE
            })
        }
        Command::Status { id } => {
            let store = open_store(cli.db, QueueSettings::default())?;
            let t = task_or_exit(&store, id)?;
            let mut line = format!(
                "{}, stage {}, attempt {}",
                t.state, t.current_stage, t.attempt
            );
            if let Some(f) = &t.failure {
                line.push_str(&format!(": {f}"));
            }
            println!("{line}");
            Ok(EXIT_OK)
        }
        Command::Report { id, format } => {
            let store = open_store(cli.db, QueueSettings::default())?;
            let t = task_or_exit(&store, id)?;
            let run = store
                .run(id)
                .map_err(|e| fail(e.into()))?
                .ok_or_else(|| fail(anyhow!("task {id} is {} and has no report", t.state)))?;
            let text = match format {
                Format::Json => run.report_json,
                Format::Md => {
                    let doc =
                        ReportDocument::from_json(&run.report_json).map_err(|e| fail(e.into()))?;
                    render_markdown(&doc, &hdr_core::report::TemplateSet::default())
                }
            };
            emit(&text, None)?;
            Ok(EXIT_OK)
        }
        Command::Log { id } => {
            let store = open_store(cli.db, QueueSettings::default())?;
            task_or_exit(&store, id)?;
            match store.run(id).map_err(|e| fail(e.into()))? {
                Some(run) => {
                    let record: RunRecord =
                        serde_json::from_str(&run.run_record).map_err(|e| fail(e.into()))?;
                    for e in &record.decision_log {
                        println!(
                            "{} {:<13} {} {}",
                            e.stage,
                            stage_name(e.stage),
                            &e.digest[..12],
                            e.event
                        );
                    }
                }
                None => {
                    for p in store.progress(id).map_err(|e| fail(e.into()))? {
                        println!(
                            "{} {:<13} attempt {} {}",
                            p.stage,
                            stage_name(p.stage),
                            p.attempt,
                            p.event
                        );
                    }
                }
            }
            Ok(EXIT_OK)
        }
        Command::Queue {
            action: QueueAction::List,
        } => {
            let store = open_store(cli.db, QueueSettings::default())?;
            for t in store.tasks(None).map_err(|e| fail(e.into()))? {
                println!(
                    "{:>5}  {:<9}  p{:<3}  stage {}  attempt {}  {}",
                    t.id, t.state, t.priority, t.current_stage, t.attempt, t.query
                );
            }
            Ok(EXIT_OK)
        }
        Command::Serve { addr } => {
            let store = open_store(cli.db, QueueSettings::default())?;
            let state = ServiceState {
                store: Arc::new(store),
                clock: Arc::new(SystemClock),
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| fail(e.into()))?;
            rt.block_on(serve(addr, state))
                .map_err(|e| fail(e.into()))?;
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("HDR_LOG")
                .unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
