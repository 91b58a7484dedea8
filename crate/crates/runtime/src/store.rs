//! Embedded SQLite store: tasks, persisted records, run artifacts and
//! progress rows. Record persistence goes through [`RecordStore`] so the
//! pipeline does not depend on the engine.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Mutex, MutexGuard};
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use hdr_core::text::content_hash;
use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage error: {0}")]
    Sql(#[from] rusqlite::Error),
    #[error("cannot encode payload: {0}")]
    Encode(#[from] serde_json::Error),
    #[error("corrupt row: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RecordKind {
    Report,
    Fact,
    SearchResult,
    Hypothesis,
    GapLog,
}

impl RecordKind {
    pub const ALL: [RecordKind; 5] = [
        RecordKind::Report,
        RecordKind::Fact,
        RecordKind::SearchResult,
        RecordKind::Hypothesis,
        RecordKind::GapLog,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Report => "Report",
            RecordKind::Fact => "Fact",
            RecordKind::SearchResult => "SearchResult",
            RecordKind::Hypothesis => "Hypothesis",
            RecordKind::GapLog => "GapLog",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub kind: RecordKind,
    /// MD5 of the normalized identity text.
    pub content_hash: String,
    pub payload: serde_json::Value,
    pub task_id: i64,
    pub stored_at: DateTime<Utc>,
}

impl StoredRecord {
    /// `identity` is the text that decides sameness (fact content, result
    /// URL, ...); it is normalized before hashing.
    pub fn new(
        kind: RecordKind,
        identity: &str,
        payload: serde_json::Value,
        task_id: i64,
        stored_at: DateTime<Utc>,
    ) -> Self {
        Self {
            kind,
            content_hash: content_hash(identity),
            payload,
            task_id,
            stored_at,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PersistOutcome {
    Stored,
    Deduplicated,
}

pub trait RecordStore: Send + Sync {
    /// Insert unless a record with the same kind and hash exists.
    fn persist(&self, record: &StoredRecord) -> Result<PersistOutcome, StoreError>;
    fn count(&self, kind: Option<RecordKind>) -> Result<usize, StoreError>;
    /// Records of a kind, in insertion order.
    fn records(&self, kind: RecordKind) -> Result<Vec<StoredRecord>, StoreError>;
}

/// In-process record store, for synchronous runs that keep nothing.
#[derive(Debug, Default)]
pub struct MemoryStore {
    rows: Mutex<Vec<StoredRecord>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl RecordStore for MemoryStore {
    fn persist(&self, record: &StoredRecord) -> Result<PersistOutcome, StoreError> {
        let mut rows = self.rows.lock().expect("memory store poisoned");
        if rows
            .iter()
            .any(|r| r.kind == record.kind && r.content_hash == record.content_hash)
        {
            return Ok(PersistOutcome::Deduplicated);
        }
        rows.push(record.clone());
        Ok(PersistOutcome::Stored)
    }

    fn count(&self, kind: Option<RecordKind>) -> Result<usize, StoreError> {
        let rows = self.rows.lock().expect("memory store poisoned");
        Ok(rows
            .iter()
            .filter(|r| kind.is_none_or(|k| r.kind == k))
            .count())
    }

    fn records(&self, kind: RecordKind) -> Result<Vec<StoredRecord>, StoreError> {
        let rows = self.rows.lock().expect("memory store poisoned");
        Ok(rows.iter().filter(|r| r.kind == kind).cloned().collect())
    }
}

/// Stored outcome of a finished pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub task_id: i64,
    pub attempt: u32,
    pub report_json: String,
    pub report_hash: String,
    pub run_record: String,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressRow {
    pub task_id: i64,
    pub attempt: u32,
    pub stage: u8,
    pub event: String,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueSettings {
    pub max_attempts: u32,
    pub heartbeat_timeout: Duration,
    pub heartbeat_period: Duration,
}

impl Default for QueueSettings {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            heartbeat_timeout: Duration::from_secs(60),
            heartbeat_period: Duration::from_secs(10),
        }
    }
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS tasks (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    query TEXT NOT NULL,
    state TEXT NOT NULL,
    priority INTEGER NOT NULL,
    current_stage INTEGER NOT NULL,
    worker_id TEXT,
    last_heartbeat TEXT,
    attempt INTEGER NOT NULL,
    created_at TEXT NOT NULL,
    started_at TEXT,
    finished_at TEXT,
    failure TEXT
);
CREATE INDEX IF NOT EXISTS tasks_claim ON tasks (state, priority DESC, created_at, id);
CREATE TABLE IF NOT EXISTS workers (
    id TEXT PRIMARY KEY,
    registered_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS records (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    kind TEXT NOT NULL,
    content_hash TEXT NOT NULL,
    payload TEXT NOT NULL,
    task_id INTEGER NOT NULL,
    stored_at TEXT NOT NULL,
    UNIQUE (kind, content_hash)
);
CREATE TABLE IF NOT EXISTS runs (
    task_id INTEGER PRIMARY KEY,
    attempt INTEGER NOT NULL,
    report_json TEXT NOT NULL,
    report_hash TEXT NOT NULL,
    run_record TEXT NOT NULL,
    degraded INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS progress (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    task_id INTEGER NOT NULL,
    attempt INTEGER NOT NULL,
    stage INTEGER NOT NULL,
    event TEXT NOT NULL,
    at TEXT NOT NULL
);
";

pub(crate) fn ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, true)
}

pub(crate) fn parse_ts(s: &str) -> Result<DateTime<Utc>, StoreError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| StoreError::Corrupt(format!("timestamp {s:?}: {e}")))
}

pub struct Store {
    conn: Mutex<Connection>,
    pub(crate) settings: QueueSettings,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("settings", &self.settings)
            .finish_non_exhaustive()
    }
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.busy_timeout(Duration::from_secs(5))?;
        Self::init(conn)
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.execute_batch(SCHEMA)?;
        Ok(Self {
            conn: Mutex::new(conn),
            settings: QueueSettings::default(),
        })
    }

    pub fn with_settings(mut self, settings: QueueSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn settings(&self) -> QueueSettings {
        self.settings
    }

    pub(crate) fn conn(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().expect("store connection poisoned")
    }

    pub fn save_run(&self, run: &RunArtifacts) -> Result<(), StoreError> {
        self.conn().execute(
            "INSERT INTO runs (task_id, attempt, report_json, report_hash, run_record, degraded)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6)
             ON CONFLICT (task_id) DO UPDATE SET attempt = ?2, report_json = ?3, report_hash = ?4,
                 run_record = ?5, degraded = ?6",
            params![
                run.task_id,
                run.attempt,
                run.report_json,
                run.report_hash,
                run.run_record,
                run.degraded
            ],
        )?;
        Ok(())
    }

    pub fn run(&self, task_id: i64) -> Result<Option<RunArtifacts>, StoreError> {
        Ok(self
            .conn()
            .query_row(
                "SELECT task_id, attempt, report_json, report_hash, run_record, degraded FROM runs WHERE task_id = ?1",
                [task_id],
                |r| {
                    Ok(RunArtifacts {
                        task_id: r.get(0)?,
                        attempt: r.get(1)?,
                        report_json: r.get(2)?,
                        report_hash: r.get(3)?,
                        run_record: r.get(4)?,
                        degraded: r.get(5)?,
                    })
                },
            )
            .optional()?)
    }

    pub fn add_progress(
        &self,
        task_id: i64,
        attempt: u32,
        stage: u8,
        event: &str,
        at: DateTime<Utc>,
    ) -> Result<(), StoreError> {
        self.conn().execute(
            "INSERT INTO progress (task_id, attempt, stage, event, at) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![task_id, attempt, stage, event, ts(at)],
        )?;
        Ok(())
    }

    pub fn progress(&self, task_id: i64) -> Result<Vec<ProgressRow>, StoreError> {
        let conn = self.conn();
        let mut stmt =
            conn.prepare("SELECT task_id, attempt, stage, event, at FROM progress WHERE task_id = ?1 ORDER BY seq")?;
        let rows = stmt.query_map([task_id], |r| {
            Ok((
                r.get::<_, i64>(0)?,
                r.get::<_, u32>(1)?,
                r.get::<_, u8>(2)?,
                r.get::<_, String>(3)?,
                r.get::<_, String>(4)?,
            ))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (task_id, attempt, stage, event, at) = row?;
            out.push(ProgressRow {
                task_id,
                attempt,
                stage,
                event,
                at: parse_ts(&at)?,
            });
        }
        Ok(out)
    }

    /// Record counts by kind.
    pub fn record_counts(&self) -> Result<BTreeMap<RecordKind, usize>, StoreError> {
        let mut out = BTreeMap::new();
        for k in RecordKind::ALL {
            out.insert(k, self.count(Some(k))?);
        }
        Ok(out)
    }
}

impl RecordStore for Store {
    fn persist(&self, record: &StoredRecord) -> Result<PersistOutcome, StoreError> {
        let changed = self.conn().execute(
            "INSERT OR IGNORE INTO records (kind, content_hash, payload, task_id, stored_at) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![
                record.kind.as_str(),
                record.content_hash,
                serde_json::to_string(&record.payload)?,
                record.task_id,
                ts(record.stored_at)
            ],
        )?;
        Ok(if changed == 0 {
            PersistOutcome::Deduplicated
        } else {
            PersistOutcome::Stored
        })
    }

    fn count(&self, kind: Option<RecordKind>) -> Result<usize, StoreError> {
        let conn = self.conn();
        let n: i64 = match kind {
            Some(k) => conn.query_row(
                "SELECT COUNT(*) FROM records WHERE kind = ?1",
                [k.as_str()],
                |r| r.get(0),
            )?,
            None => conn.query_row("SELECT COUNT(*) FROM records", [], |r| r.get(0))?,
        };
        Ok(n as usize)
    }

    fn records(&self, kind: RecordKind) -> Result<Vec<StoredRecord>, StoreError> {
        let conn = self.conn();
        let mut stmt = conn.prepare(
            "SELECT kind, content_hash, payload, task_id, stored_at FROM records WHERE kind = ?1 ORDER BY seq",
        )?;
        let rows = stmt.query_map([kind.as_str()], |r| {
            Ok((
                r.get::<_, String>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, i64>(3)?,
                r.get::<_, String>(4)?,
            ))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (k, content_hash, payload, task_id, stored_at) = row?;
            out.push(StoredRecord {
                kind: RecordKind::parse(&k)
                    .ok_or_else(|| StoreError::Corrupt(format!("record kind {k:?}")))?,
                content_hash,
                payload: serde_json::from_str(&payload)?,
                task_id,
                stored_at: parse_ts(&stored_at)?,
            });
        }
        Ok(out)
    }
}
