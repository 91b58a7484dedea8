//! The eight-stage research run: understanding, hypotheses, plan, search,
//! extraction, analysis with gap iteration, report, persistence.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use hdr_core::analysis::{build_knowledge_graph, Analyzer, Fact, Verdict};
use hdr_core::catalog::SourceCatalog;
use hdr_core::gap::{GapLoop, IterationBudget, IterationRecord, DEFAULT_MAX_ITERATIONS};
use hdr_core::gateway::{LlmGateway, SearchGateway};
use hdr_core::planner::{generate_hypotheses, plan_research};
use hdr_core::report::{
    build_report, compose_summary, coverage_score, derive_requirements, QualityWeights,
    ReportDocument, ReportInputs, TemplateSet,
};
use hdr_core::search::{execute_plan, SearchConfig, SubjectProfile};
use hdr_core::text::md5_hex;
use hdr_core::understanding::{understand, TemporalLexicon};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::queue::{ResearchTask, TaskState, STAGE_COUNT};
use crate::store::{PersistOutcome, RecordKind, RecordStore, StoredRecord};

pub const STAGE_NAMES: [&str; 8] = [
    "understanding",
    "hypotheses",
    "planning",
    "search",
    "extraction",
    "analysis",
    "report",
    "persistence",
];

pub fn stage_name(stage: u8) -> &'static str {
    STAGE_NAMES
        .get(usize::from(stage).wrapping_sub(1))
        .copied()
        .unwrap_or("unknown")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("stage {stage} ({}) failed: {cause}", stage_name(*.stage))]
pub struct StageFailure {
    pub stage: u8,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("task is {0}, not Running")]
    TaskNotRunning(TaskState),
    #[error("task has used {attempt} of {max} attempts")]
    AttemptsExhausted { attempt: u32, max: u32 },
    #[error(transparent)]
    Stage(#[from] StageFailure),
}

impl PipelineError {
    pub fn failed_stage(&self) -> Option<u8> {
        match self {
            PipelineError::Stage(f) => Some(f.stage),
            _ => None,
        }
    }
}

pub struct Providers {
    pub llm: LlmGateway,
    pub search: SearchGateway,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Research date: temporal expressions, freshness and the report stamp.
    pub now: NaiveDate,
    /// Overrides the depth recommended by complexity assessment.
    pub d_max: Option<usize>,
    pub n_tasks: Option<usize>,
    pub max_iterations: usize,
    pub max_results: usize,
    pub weights: QualityWeights,
    pub catalog: SourceCatalog,
    pub lexicon: TemporalLexicon,
    pub templates: TemplateSet,
    pub context: Option<String>,
}

impl PipelineConfig {
    pub fn new(now: NaiveDate) -> Self {
        Self {
            now,
            d_max: None,
            n_tasks: None,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            max_results: SearchConfig::default().max_results,
            weights: QualityWeights::default(),
            catalog: SourceCatalog::default(),
            lexicon: TemporalLexicon::default(),
            templates: TemplateSet::default(),
            context: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionEntry {
    pub stage: u8,
    pub event: String,
    /// MD5 of the stage output's JSON.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task_id: i64,
    pub attempt: u32,
    pub stage_outputs: BTreeMap<u8, Value>,
    pub decision_log: Vec<DecisionEntry>,
    pub degraded: bool,
    pub iterations: Vec<IterationRecord>,
}

impl RunRecord {
    fn new(task: &ResearchTask) -> Self {
        Self {
            task_id: task.id,
            attempt: task.attempt,
            stage_outputs: BTreeMap::new(),
            decision_log: Vec::new(),
            degraded: false,
            iterations: Vec::new(),
        }
    }

    fn record(&mut self, stage: u8, event: String, output: Value) -> DecisionEntry {
        let digest = md5_hex(output.to_string().as_bytes());
        let entry = DecisionEntry {
            stage,
            event,
            digest,
        };
        self.stage_outputs.insert(stage, output);
        self.decision_log.push(entry.clone());
        entry
    }

    pub fn logged_stages(&self) -> Vec<u8> {
        self.decision_log.iter().map(|e| e.stage).collect()
    }
}

/// Hooks the pipeline calls at stage boundaries. An error from
/// `stage_started` stops the run at that stage.
pub trait StageObserver {
    fn stage_started(&mut self, _stage: u8) -> Result<(), String> {
        Ok(())
    }
    fn stage_finished(&mut self, _entry: &DecisionEntry) {}
    fn gap_iteration(&mut self, _record: &IterationRecord) {}
}

/// Observer that ignores everything.
pub struct NoopObserver;

impl StageObserver for NoopObserver {}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersistSummary {
    pub stored: BTreeMap<RecordKind, usize>,
    pub deduplicated: BTreeMap<RecordKind, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub record: RunRecord,
    pub report: ReportDocument,
    pub persisted: PersistSummary,
}

fn fail(stage: u8, cause: impl ToString) -> StageFailure {
    StageFailure {
        stage,
        cause: cause.to_string(),
    }
}

fn begin(observer: &mut dyn StageObserver, stage: u8) -> Result<(), StageFailure> {
    tracing::debug!(stage, name = stage_name(stage), "stage start");
    observer
        .stage_started(stage)
        .map_err(|cause| fail(stage, cause))
}

fn finish(
    observer: &mut dyn StageObserver,
    record: &mut RunRecord,
    stage: u8,
    event: String,
    output: Value,
) {
    let entry = record.record(stage, event, output);
    observer.stage_finished(&entry);
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("stage output serializes")
}

fn persist_all(
    store: &dyn RecordStore,
    task_id: i64,
    at: DateTime<Utc>,
    report_json: &str,
    report: &ReportDocument,
    analysis: &hdr_core::analysis::AnalysisState,
    gap_log: &Value,
) -> Result<PersistSummary, String> {
    let mut records = vec![StoredRecord::new(
        RecordKind::Report,
        report_json,
        serde_json::from_str(report_json).map_err(|e| e.to_string())?,
        task_id,
        at,
    )];
    for f in &analysis.facts {
        records.push(StoredRecord::new(
            RecordKind::Fact,
            &f.content,
            to_value(f),
            task_id,
            at,
        ));
    }
    for r in &analysis.corpus {
        records.push(StoredRecord::new(
            RecordKind::SearchResult,
            &r.key(),
            to_value(r),
            task_id,
            at,
        ));
    }
    for h in &analysis.hypotheses {
        records.push(StoredRecord::new(
            RecordKind::Hypothesis,
            &h.statement,
            to_value(h),
            task_id,
            at,
        ));
    }
    records.push(StoredRecord::new(
        RecordKind::GapLog,
        &format!("{}\n{}", report.query, gap_log),
        gap_log.clone(),
        task_id,
        at,
    ));
    let mut summary = PersistSummary::default();
    for r in &records {
        let slot = match store.persist(r).map_err(|e| e.to_string())? {
            PersistOutcome::Stored => &mut summary.stored,
            PersistOutcome::Deduplicated => &mut summary.deduplicated,
        };
        *slot.entry(r.kind).or_default() += 1;
    }
    Ok(summary)
}

/// Run all eight stages for a Running task. `persisted_at` stamps the
/// stored records; the report itself depends only on the inputs.
pub fn execute(
    task: &ResearchTask,
    providers: &Providers,
    config: &PipelineConfig,
    store: &dyn RecordStore,
    observer: &mut dyn StageObserver,
    persisted_at: DateTime<Utc>,
) -> Result<PipelineOutput, PipelineError> {
    if task.state != TaskState::Running {
        return Err(PipelineError::TaskNotRunning(task.state));
    }
    let llm = &providers.llm;
    let mut record = RunRecord::new(task);

    begin(observer, 1)?;
    let understanding = understand(
        &task.query,
        config.context.as_deref(),
        config.now,
        llm,
        &config.lexicon,
    )
    .map_err(|e| fail(1, e))?;
    let d_max = config
        .d_max
        .unwrap_or(understanding.recommended_d_max)
        .max(1);
    let n_tasks = config
        .n_tasks
        .unwrap_or(understanding.recommended_n_tasks)
        .max(1);
    finish(
        observer,
        &mut record,
        1,
        format!(
            "intent {:?} ({:.2}), {} entities, strategy {:?}, d_max {d_max}, {n_tasks} tasks",
            understanding.query.intent,
            understanding.intent_confidence,
            understanding.entities.len(),
            understanding.strategy
        ),
        to_value(&understanding),
    );

    begin(observer, 2)?;
    let hypotheses = generate_hypotheses(&understanding, None, llm).map_err(|e| fail(2, e))?;
    finish(
        observer,
        &mut record,
        2,
        format!("{} hypotheses", hypotheses.len()),
        to_value(&hypotheses),
    );

    begin(observer, 3)?;
    let plan = plan_research(&hypotheses, &understanding, &config.catalog, n_tasks, llm)
        .map_err(|e| fail(3, e))?;
    let requirements =
        derive_requirements(&understanding.query.text, &hypotheses, llm).map_err(|e| fail(3, e))?;
    finish(
        observer,
        &mut record,
        3,
        format!(
            "{} tasks, {} requirements",
            plan.tasks.len(),
            requirements.len()
        ),
        json!({"plan": plan, "requirements": requirements}),
    );

    begin(observer, 4)?;
    let profile = SubjectProfile::from_understanding(&understanding);
    let search_config = SearchConfig {
        d_max,
        max_results: config.max_results,
        ..SearchConfig::default()
    };
    let search = execute_plan(
        &plan,
        &understanding,
        profile.as_ref(),
        &providers.search,
        &config.catalog,
        config.now,
        search_config,
    )
    .map_err(|e| fail(4, e))?;
    finish(
        observer,
        &mut record,
        4,
        format!(
            "{} results from {} queries ({} failed, {} off-subject)",
            search.results.len(),
            search.queries_issued,
            search.queries_failed,
            search.discarded
        ),
        to_value(&search),
    );

    begin(observer, 5)?;
    let subject = understanding
        .primary_entity()
        .unwrap_or(&understanding.query.text)
        .to_string();
    let analyzer = Analyzer {
        llm,
        catalog: &config.catalog,
        profile: profile.as_ref(),
        query: &understanding.query.text,
        subject,
    };
    let extraction = analyzer
        .extract(&search.results, &hypotheses)
        .map_err(|e| fail(5, e))?;
    finish(
        observer,
        &mut record,
        5,
        format!(
            "{} facts ({} unparsed results, {} off-subject facts)",
            extraction.facts.len(),
            extraction.skipped_results,
            extraction.off_subject
        ),
        json!({
            "facts": extraction.facts,
            "skipped_results": extraction.skipped_results,
            "off_subject": extraction.off_subject,
        }),
    );

    begin(observer, 6)?;
    let initial = analyzer
        .analyze(hypotheses, search.results, extraction.facts)
        .map_err(|e| fail(6, e))?;
    let coverage = |s: &hdr_core::analysis::AnalysisState| coverage_score(&requirements, s);
    let gap_loop = GapLoop {
        analyzer: &analyzer,
        search: &providers.search,
        search_config,
        now: config.now,
        budget: IterationBudget {
            max_iterations: config.max_iterations,
        },
        coverage: &coverage,
    };
    let outcome = gap_loop.run(&understanding.query.text, initial);
    for it in &outcome.iterations {
        observer.gap_iteration(it);
    }
    let state = outcome.state;
    record.degraded = outcome.degraded;
    record.iterations = outcome.iterations.clone();
    let accepted = state.accepted_count();
    finish(
        observer,
        &mut record,
        6,
        format!(
            "{} facts ({accepted} accepted), {} derived, {} contradictions, {} gap iterations{}",
            state.facts.len(),
            state.derived.len(),
            state.contradictions.len(),
            outcome.iterations.len(),
            if outcome.degraded { ", degraded" } else { "" }
        ),
        json!({
            "facts": state.facts,
            "validations": state.validations,
            "derived": state.derived,
            "contradictions": state.contradictions,
            "hypotheses": state.hypotheses,
            "comparisons": state.comparisons,
            "candidate_pairs": state.candidate_pairs,
            "iterations": outcome.iterations,
            "remaining_gaps": outcome.remaining_gaps,
            "supplementary_queries": outcome.supplementary_queries,
            "degraded": outcome.degraded,
            "degraded_reason": outcome.degraded_reason,
        }),
    );

    begin(observer, 7)?;
    let usable: Vec<Fact> = state
        .facts
        .iter()
        .filter(|f| state.verdict(&f.id) != Some(Verdict::Reject))
        .cloned()
        .collect();
    let graph =
        build_knowledge_graph(&understanding.query.text, &usable, llm).map_err(|e| fail(7, e))?;
    let summary =
        compose_summary(&understanding.query.text, &state, llm).map_err(|e| fail(7, e))?;
    let report = build_report(
        ReportInputs {
            query: &understanding.query.text,
            domain: &understanding.query.domain,
            state: &state,
            requirements: &requirements,
            remaining_gaps: &outcome.remaining_gaps,
            iterations: &outcome.iterations,
            knowledge_graph: graph,
            summary,
            weights: config.weights,
            degraded: outcome.degraded,
            generated_at: config.now.to_string(),
        },
        &config.templates,
    )
    .map_err(|e| fail(7, e))?;
    let report_json = report.to_json();
    let report_hash = md5_hex(report_json.as_bytes());
    finish(
        observer,
        &mut record,
        7,
        format!(
            "report {} (coverage {:.3}, composite quality {:.3})",
            &report_hash[..12],
            report.coverage.score,
            report.quality.composite
        ),
        json!({
            "report_hash": report_hash,
            "template": report.template,
            "coverage": report.coverage.score,
            "quality": report.quality,
        }),
    );

    begin(observer, 8)?;
    let gap_log = json!({
        "iterations": outcome.iterations,
        "remaining_gaps": outcome.remaining_gaps,
        "degraded": outcome.degraded,
    });
    let persisted = persist_all(
        store,
        task.id,
        persisted_at,
        &report_json,
        &report,
        &state,
        &gap_log,
    )
    .map_err(|e| fail(8, e))?;
    let stored: usize = persisted.stored.values().sum();
    let deduplicated: usize = persisted.deduplicated.values().sum();
    finish(
        observer,
        &mut record,
        8,
        format!("{stored} records stored, {deduplicated} deduplicated"),
        to_value(&persisted),
    );
    debug_assert_eq!(
        record.logged_stages(),
        (1..=STAGE_COUNT).collect::<Vec<_>>()
    );

    Ok(PipelineOutput {
        record,
        report,
        persisted,
    })
}

/// Re-run a retried task from stage 1. Completed tasks are left alone
/// (`Ok(None)`); tasks past their attempt budget are refused.
pub fn resume(
    task: &ResearchTask,
    max_attempts: u32,
    providers: &Providers,
    config: &PipelineConfig,
    store: &dyn RecordStore,
    observer: &mut dyn StageObserver,
    persisted_at: DateTime<Utc>,
) -> Result<Option<PipelineOutput>, PipelineError> {
    match task.state {
        TaskState::Completed => return Ok(None),
        TaskState::Failed => {
            return Err(PipelineError::AttemptsExhausted {
                attempt: task.attempt,
                max: max_attempts,
            })
        }
        _ => {}
    }
    if task.attempt > max_attempts {
        return Err(PipelineError::AttemptsExhausted {
            attempt: task.attempt,
            max: max_attempts,
        });
    }
    execute(task, providers, config, store, observer, persisted_at).map(Some)
}
