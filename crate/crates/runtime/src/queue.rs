//! Priority task queue with claim, heartbeat and timeout sweep.

use std::time::Duration;

use chrono::{DateTime, Utc};
use rusqlite::{params, OptionalExtension, Row, TransactionBehavior};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{parse_ts, ts, Store, StoreError};

pub const STAGE_COUNT: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskState {
    Queued,
    Running,
    Completed,
    Failed,
}

impl TaskState {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskState::Queued => "Queued",
            TaskState::Running => "Running",
            TaskState::Completed => "Completed",
            TaskState::Failed => "Failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Queued, Self::Running, Self::Completed, Self::Failed]
            .into_iter()
            .find(|t| t.as_str() == s)
    }

    pub fn can_transition(self, to: TaskState) -> bool {
        use TaskState::*;
        matches!(
            (self, to),
            (Queued, Running) | (Running, Completed) | (Running, Failed) | (Running, Queued)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Completed | TaskState::Failed)
    }
}

impl std::fmt::Display for TaskState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchTask {
    pub id: i64,
    pub query: String,
    pub state: TaskState,
    pub priority: i64,
    pub current_stage: u8,
    pub worker_id: Option<String>,
    pub last_heartbeat: Option<DateTime<Utc>>,
    pub attempt: u32,
    pub created_at: DateTime<Utc>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    pub failure: Option<String>,
}

impl ResearchTask {
    /// A task that never touches the queue, for synchronous runs.
    pub fn detached(query: &str, now: DateTime<Utc>) -> Self {
        Self {
            id: 0,
            query: query.to_string(),
            state: TaskState::Running,
            priority: 0,
            current_stage: 1,
            worker_id: Some("local".into()),
            last_heartbeat: Some(now),
            attempt: 1,
            created_at: now,
            started_at: Some(now),
            finished_at: None,
            failure: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum QueueError {
    #[error("query must not be empty")]
    EmptyQuery,
    #[error("worker {0:?} is not registered")]
    UnknownWorker(String),
    #[error("task {0} does not exist")]
    NotFound(i64),
    #[error("task {task} is owned by another worker")]
    NotOwner { task: i64 },
    #[error("task {task} is {state}, not Running")]
    TaskNotRunning { task: i64, state: TaskState },
    #[error("stage {requested} is behind current stage {current}")]
    StageRegression { current: u8, requested: u8 },
    #[error("stage {0} outside 1..=8")]
    InvalidStage(u8),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<rusqlite::Error> for QueueError {
    fn from(e: rusqlite::Error) -> Self {
        QueueError::Store(StoreError::Sql(e))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub requeued: Vec<i64>,
    pub failed: Vec<i64>,
}

impl SweepOutcome {
    pub fn is_empty(&self) -> bool {
        self.requeued.is_empty() && self.failed.is_empty()
    }
}

const TASK_COLUMNS: &str =
    "id, query, state, priority, current_stage, worker_id, last_heartbeat, attempt, \
     created_at, started_at, finished_at, failure";

type RawTask = (
    i64,
    String,
    String,
    i64,
    u8,
    Option<String>,
    Option<String>,
    u32,
    String,
    Option<String>,
    Option<String>,
    Option<String>,
);

fn raw_task(r: &Row<'_>) -> rusqlite::Result<RawTask> {
    Ok((
        r.get(0)?,
        r.get(1)?,
        r.get(2)?,
        r.get(3)?,
        r.get(4)?,
        r.get(5)?,
        r.get(6)?,
        r.get(7)?,
        r.get(8)?,
        r.get(9)?,
        r.get(10)?,
        r.get(11)?,
    ))
}

fn decode(raw: RawTask) -> Result<ResearchTask, StoreError> {
    let opt = |s: Option<String>| s.map(|s| parse_ts(&s)).transpose();
    Ok(ResearchTask {
        id: raw.0,
        query: raw.1,
        state: TaskState::parse(&raw.2)
            .ok_or_else(|| StoreError::Corrupt(format!("task state {:?}", raw.2)))?,
        priority: raw.3,
        current_stage: raw.4,
        worker_id: raw.5,
        last_heartbeat: opt(raw.6)?,
        attempt: raw.7,
        created_at: parse_ts(&raw.8)?,
        started_at: opt(raw.9)?,
        finished_at: opt(raw.10)?,
        failure: raw.11,
    })
}

impl Store {
    pub fn register_worker(&self, worker_id: &str, now: DateTime<Utc>) -> Result<(), QueueError> {
        self.conn().execute(
            "INSERT OR IGNORE INTO workers (id, registered_at) VALUES (?1, ?2)",
            params![worker_id, ts(now)],
        )?;
        Ok(())
    }

    pub fn enqueue(
        &self,
        query: &str,
        priority: i64,
        now: DateTime<Utc>,
    ) -> Result<i64, QueueError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(QueueError::EmptyQuery);
        }
        let conn = self.conn();
        conn.execute(
            "INSERT INTO tasks (query, state, priority, current_stage, attempt, created_at)
             VALUES (?1, 'Queued', ?2, 1, 1, ?3)",
            params![query, priority, ts(now)],
        )?;
        Ok(conn.last_insert_rowid())
    }

    pub fn task(&self, id: i64) -> Result<Option<ResearchTask>, QueueError> {
        let raw = self
            .conn()
            .query_row(
                &format!("SELECT {TASK_COLUMNS} FROM tasks WHERE id = ?1"),
                [id],
                raw_task,
            )
            .optional()?;
        Ok(raw.map(decode).transpose()?)
    }

    /// All tasks in claim order within each state.
    pub fn tasks(&self, state: Option<TaskState>) -> Result<Vec<ResearchTask>, QueueError> {
        let conn = self.conn();
        let mut stmt = conn.prepare(&format!(
            "SELECT {TASK_COLUMNS} FROM tasks WHERE ?1 IS NULL OR state = ?1
             ORDER BY priority DESC, created_at, id"
        ))?;
        let raws = stmt
            .query_map([state.map(TaskState::as_str)], raw_task)?
            .collect::<Result<Vec<_>, _>>()?;
        Ok(raws.into_iter().map(decode).collect::<Result<_, _>>()?)
    }

    /// Move the next Queued task (priority desc, then enqueue order) to
    /// Running under `worker_id`.
    pub fn claim(
        &self,
        worker_id: &str,
        now: DateTime<Utc>,
    ) -> Result<Option<ResearchTask>, QueueError> {
        let mut conn = self.conn();
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let registered: bool = tx
            .query_row("SELECT 1 FROM workers WHERE id = ?1", [worker_id], |_| {
                Ok(true)
            })
            .optional()?
            .unwrap_or(false);
        if !registered {
            return Err(QueueError::UnknownWorker(worker_id.to_string()));
        }
        let next: Option<i64> = tx
            .query_row(
                "SELECT id FROM tasks WHERE state = 'Queued' ORDER BY priority DESC, created_at, id LIMIT 1",
                [],
                |r| r.get(0),
            )
            .optional()?;
        let Some(id) = next else { return Ok(None) };
        let now = ts(now);
        tx.execute(
            "UPDATE tasks SET state = 'Running', worker_id = ?2, started_at = ?3, last_heartbeat = ?3,
                 current_stage = 1
             WHERE id = ?1 AND state = 'Queued'",
            params![id, worker_id, now],
        )?;
        let raw = tx.query_row(
            &format!("SELECT {TASK_COLUMNS} FROM tasks WHERE id = ?1"),
            [id],
            raw_task,
        )?;
        tx.commit()?;
        Ok(Some(decode(raw)?))
    }

    fn owned_running(
        &self,
        conn: &rusqlite::Connection,
        id: i64,
        worker_id: &str,
    ) -> Result<ResearchTask, QueueError> {
        let raw = conn
            .query_row(
                &format!("SELECT {TASK_COLUMNS} FROM tasks WHERE id = ?1"),
                [id],
                raw_task,
            )
            .optional()?
            .ok_or(QueueError::NotFound(id))?;
        let task = decode(raw)?;
        if task.state != TaskState::Running {
            return Err(QueueError::TaskNotRunning {
                task: id,
                state: task.state,
            });
        }
        if task.worker_id.as_deref() != Some(worker_id) {
            return Err(QueueError::NotOwner { task: id });
        }
        Ok(task)
    }

    pub fn heartbeat(
        &self,
        id: i64,
        worker_id: &str,
        stage: u8,
        now: DateTime<Utc>,
    ) -> Result<(), QueueError> {
        if !(1..=STAGE_COUNT).contains(&stage) {
            return Err(QueueError::InvalidStage(stage));
        }
        let mut conn = self.conn();
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let task = self.owned_running(&tx, id, worker_id)?;
        if stage < task.current_stage {
            return Err(QueueError::StageRegression {
                current: task.current_stage,
                requested: stage,
            });
        }
        tx.execute(
            "UPDATE tasks SET last_heartbeat = ?2, current_stage = ?3 WHERE id = ?1",
            params![id, ts(now), stage],
        )?;
        tx.commit()?;
        Ok(())
    }

    pub fn complete(&self, id: i64, worker_id: &str, now: DateTime<Utc>) -> Result<(), QueueError> {
        self.finish(id, worker_id, TaskState::Completed, None, now)
    }

    pub fn fail(
        &self,
        id: i64,
        worker_id: &str,
        reason: &str,
        now: DateTime<Utc>,
    ) -> Result<(), QueueError> {
        self.finish(id, worker_id, TaskState::Failed, Some(reason), now)
    }

    fn finish(
        &self,
        id: i64,
        worker_id: &str,
        state: TaskState,
        reason: Option<&str>,
        now: DateTime<Utc>,
    ) -> Result<(), QueueError> {
        let mut conn = self.conn();
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        self.owned_running(&tx, id, worker_id)?;
        tx.execute(
            "UPDATE tasks SET state = ?2, finished_at = ?3, failure = ?4, worker_id = NULL WHERE id = ?1",
            params![id, state.as_str(), ts(now), reason],
        )?;
        tx.commit()?;
        Ok(())
    }

    /// Requeue (or fail, once attempts are used up) Running tasks whose
    /// last heartbeat is older than `timeout`.
    pub fn sweep(&self, now: DateTime<Utc>, timeout: Duration) -> Result<SweepOutcome, QueueError> {
        let timeout = chrono::Duration::from_std(timeout).unwrap_or(chrono::Duration::MAX);
        let mut conn = self.conn();
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let running = {
            let mut stmt = tx.prepare(&format!(
                "SELECT {TASK_COLUMNS} FROM tasks WHERE state = 'Running' ORDER BY id"
            ))?;
            let raws = stmt
                .query_map([], raw_task)?
                .collect::<Result<Vec<_>, _>>()?;
            raws.into_iter()
                .map(decode)
                .collect::<Result<Vec<_>, _>>()?
        };
        let mut out = SweepOutcome::default();
        for t in running {
            let last = t.last_heartbeat.or(t.started_at).unwrap_or(t.created_at);
            if now - last <= timeout {
                continue;
            }
            if t.attempt < self.settings.max_attempts {
                tx.execute(
                    "UPDATE tasks SET state = 'Queued', attempt = attempt + 1, worker_id = NULL,
                         current_stage = 1, last_heartbeat = NULL, started_at = NULL
                     WHERE id = ?1",
                    [t.id],
                )?;
                out.requeued.push(t.id);
            } else {
                tx.execute(
                    "UPDATE tasks SET state = 'Failed', worker_id = NULL, finished_at = ?2,
                         failure = 'heartbeat timeout after final attempt'
                     WHERE id = ?1",
                    params![t.id, ts(now)],
                )?;
                out.failed.push(t.id);
            }
        }
        tx.commit()?;
        if !out.is_empty() {
            tracing::info!(requeued = ?out.requeued, failed = ?out.failed, "sweep");
        }
        Ok(out)
    }
}
