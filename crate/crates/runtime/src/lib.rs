//! Execution side of hdr: the SQLite-backed task queue and record store,
//! the eight-stage pipeline, the worker pool and the HTTP service.

pub mod mixer;
pub mod pipeline;
pub mod queue;
pub mod service;
pub mod store;
pub mod worker;

pub use pipeline::{
    execute, resume, DecisionEntry, NoopObserver, PipelineConfig, PipelineError, PipelineOutput,
    Providers, RunRecord, StageFailure, StageObserver,
};
pub use queue::{QueueError, ResearchTask, SweepOutcome, TaskState};
pub use store::{
    MemoryStore, PersistOutcome, RecordKind, RecordStore, Store, StoreError, StoredRecord,
};
