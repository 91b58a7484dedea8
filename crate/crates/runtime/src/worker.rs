//! Worker pool: claims tasks, runs the pipeline, heartbeats while it runs,
//! and sweeps tasks whose workers went silent.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU8, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use hdr_core::gap::IterationRecord;
use hdr_core::gateway::{live_providers_from_env, load_script, Clock};
use hdr_core::text::md5_hex;

use crate::pipeline::{
    resume, stage_name, DecisionEntry, PipelineConfig, PipelineError, Providers, StageObserver,
};
use crate::queue::{QueueError, ResearchTask};
use crate::store::{RunArtifacts, Store};

pub trait ProviderFactory: Send + Sync {
    fn providers(&self, task: &ResearchTask) -> Result<Providers, String>;
}

/// Fresh scripted providers per task, read from a script file.
#[derive(Debug, Clone)]
pub struct ScriptFactory {
    pub path: PathBuf,
}

impl ProviderFactory for ScriptFactory {
    fn providers(&self, _task: &ResearchTask) -> Result<Providers, String> {
        let bundle = load_script(&self.path).map_err(|e| e.to_string())?;
        Ok(Providers {
            llm: bundle.llm_gateway(),
            search: bundle.search_gateway(),
        })
    }
}

/// HTTP providers configured from `HDR_*` environment variables.
#[derive(Debug, Clone, Default)]
pub struct EnvFactory;

impl ProviderFactory for EnvFactory {
    fn providers(&self, _task: &ResearchTask) -> Result<Providers, String> {
        let (llm, search) = live_providers_from_env().map_err(|e| e.to_string())?;
        Ok(Providers { llm, search })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WorkerSettings {
    pub concurrency: usize,
    pub poll_interval: Duration,
    /// Stop once no task is queued or running.
    pub drain: bool,
}

impl Default for WorkerSettings {
    fn default() -> Self {
        Self {
            concurrency: 1,
            poll_interval: Duration::from_millis(500),
            drain: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PoolReport {
    pub completed: Vec<i64>,
    pub failed: Vec<i64>,
    /// Tasks taken away by the sweep while this pool ran them.
    pub lost: Vec<i64>,
}

/// Writes progress rows and heartbeats at stage boundaries.
struct TaskObserver<'a> {
    store: &'a Store,
    clock: &'a dyn Clock,
    task: &'a ResearchTask,
    worker_id: &'a str,
    stage: &'a AtomicU8,
    lost: bool,
}

impl TaskObserver<'_> {
    fn progress(&self, stage: u8, event: &str) {
        if let Err(e) = self.store.add_progress(
            self.task.id,
            self.task.attempt,
            stage,
            event,
            self.clock.now(),
        ) {
            tracing::warn!(task = self.task.id, error = %e, "cannot write progress");
        }
    }
}

impl StageObserver for TaskObserver<'_> {
    fn stage_started(&mut self, stage: u8) -> Result<(), String> {
        self.stage.store(stage, Ordering::SeqCst);
        match self
            .store
            .heartbeat(self.task.id, self.worker_id, stage, self.clock.now())
        {
            Ok(()) => {
                self.progress(stage, &format!("{} started", stage_name(stage)));
                Ok(())
            }
            Err(e @ (QueueError::NotOwner { .. } | QueueError::TaskNotRunning { .. })) => {
                self.lost = true;
                Err(format!("ownership lost: {e}"))
            }
            Err(e) => Err(e.to_string()),
        }
    }

    fn stage_finished(&mut self, entry: &DecisionEntry) {
        self.progress(entry.stage, &entry.event);
    }

    fn gap_iteration(&mut self, r: &IterationRecord) {
        self.progress(
            6,
            &format!(
                "gap iteration {}: {} queries, {} new facts",
                r.iteration,
                r.queries.len(),
                r.facts_added
            ),
        );
    }
}

pub struct WorkerPool {
    pub store: Arc<Store>,
    pub factory: Arc<dyn ProviderFactory>,
    pub config: Arc<PipelineConfig>,
    pub clock: Arc<dyn Clock>,
    pub settings: WorkerSettings,
    /// Prefix for worker ids.
    pub name: String,
}

impl WorkerPool {
    fn process(&self, worker_id: &str, task: ResearchTask, report: &Mutex<PoolReport>) {
        let store = &*self.store;
        let now = || self.clock.now();
        let providers = match self.factory.providers(&task) {
            Ok(p) => p,
            Err(e) => {
                tracing::error!(task = task.id, error = %e, "provider setup failed");
                if store
                    .fail(task.id, worker_id, &format!("provider setup: {e}"), now())
                    .is_ok()
                {
                    report.lock().unwrap().failed.push(task.id);
                }
                return;
            }
        };
        let stage = AtomicU8::new(1);
        let done = AtomicBool::new(false);
        let period = store.settings().heartbeat_period;
        let mut observer = TaskObserver {
            store,
            clock: &*self.clock,
            task: &task,
            worker_id,
            stage: &stage,
            lost: false,
        };
        let result = std::thread::scope(|s| {
            s.spawn(|| {
                let mut waited = Duration::ZERO;
                let tick = period
                    .min(Duration::from_millis(50))
                    .max(Duration::from_millis(1));
                while !done.load(Ordering::SeqCst) {
                    std::thread::sleep(tick);
                    waited += tick;
                    if waited >= period {
                        waited = Duration::ZERO;
                        let _ = store.heartbeat(
                            task.id,
                            worker_id,
                            stage.load(Ordering::SeqCst),
                            now(),
                        );
                    }
                }
            });
            let r = resume(
                &task,
                store.settings().max_attempts,
                &providers,
                &self.config,
                store,
                &mut observer,
                now(),
            );
            done.store(true, Ordering::SeqCst);
            r
        });
        let lost = observer.lost;
        match result {
            Ok(Some(out)) => {
                let report_json = out.report.to_json();
                let artifacts = RunArtifacts {
                    task_id: task.id,
                    attempt: task.attempt,
                    report_hash: md5_hex(report_json.as_bytes()),
                    report_json,
                    run_record: serde_json::to_string(&out.record).expect("run record serializes"),
                    degraded: out.record.degraded,
                };
                let saved = store.save_run(&artifacts).map_err(|e| e.to_string());
                let finished = saved.and_then(|_| {
                    store
                        .complete(task.id, worker_id, now())
                        .map_err(|e| e.to_string())
                });
                match finished {
                    Ok(()) => report.lock().unwrap().completed.push(task.id),
                    Err(e) => {
                        tracing::warn!(task = task.id, error = %e, "could not complete task");
                        report.lock().unwrap().lost.push(task.id);
                    }
                }
            }
            Ok(None) => {}
            Err(_) if lost => {
                tracing::warn!(task = task.id, "task reclaimed by sweep; abandoning");
                report.lock().unwrap().lost.push(task.id);
            }
            Err(e) => {
                if let PipelineError::Stage(f) = &e {
                    let _ = store.add_progress(
                        task.id,
                        task.attempt,
                        f.stage,
                        &format!("failed: {}", f.cause),
                        now(),
                    );
                }
                tracing::error!(task = task.id, error = %e, "task failed");
                if store
                    .fail(task.id, worker_id, &e.to_string(), now())
                    .is_ok()
                {
                    report.lock().unwrap().failed.push(task.id);
                }
            }
        }
    }

    fn idle(&self) -> bool {
        use crate::queue::TaskState::{Queued, Running};
        let open = |s| self.store.tasks(Some(s)).map(|t| t.len()).unwrap_or(0);
        open(Queued) == 0 && open(Running) == 0
    }

    /// Run until `shutdown` is set (or, when draining, until the queue is idle).
    pub fn run(&self, shutdown: &AtomicBool) -> PoolReport {
        let report = Mutex::new(PoolReport::default());
        let finished_workers = AtomicUsize::new(0);
        let n = self.settings.concurrency.max(1);
        std::thread::scope(|s| {
            s.spawn(|| {
                let settings = self.store.settings();
                while !shutdown.load(Ordering::SeqCst)
                    && finished_workers.load(Ordering::SeqCst) < n
                {
                    if let Err(e) = self
                        .store
                        .sweep(self.clock.now(), settings.heartbeat_timeout)
                    {
                        tracing::warn!(error = %e, "sweep failed");
                    }
                    std::thread::sleep(self.settings.poll_interval.min(settings.heartbeat_period));
                }
            });
            for i in 0..n {
                let report = &report;
                let finished_workers = &finished_workers;
                s.spawn(move || {
                    let worker_id = format!("{}-{i}", self.name);
                    if let Err(e) = self.store.register_worker(&worker_id, self.clock.now()) {
                        tracing::error!(error = %e, "cannot register worker");
                        finished_workers.fetch_add(1, Ordering::SeqCst);
                        return;
                    }
                    while !shutdown.load(Ordering::SeqCst) {
                        match self.store.claim(&worker_id, self.clock.now()) {
                            Ok(Some(task)) => {
                                tracing::info!(task = task.id, worker = %worker_id, attempt = task.attempt, "claimed");
                                self.process(&worker_id, task, report);
                            }
                            Ok(None) if self.settings.drain && self.idle() => break,
                            Ok(None) => std::thread::sleep(self.settings.poll_interval),
                            Err(e) => {
                                tracing::warn!(error = %e, "claim failed");
                                std::thread::sleep(self.settings.poll_interval);
                            }
                        }
                    }
                    finished_workers.fetch_add(1, Ordering::SeqCst);
                });
            }
        });
        report.into_inner().unwrap()
    }
}
