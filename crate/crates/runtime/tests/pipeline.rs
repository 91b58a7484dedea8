mod common;

use common::*;
use hdr_core::analysis::Verdict;
use hdr_core::report::{render_markdown, CoverageStatus, TemplateSet};
use hdr_runtime::{
    execute, resume, MemoryStore, NoopObserver, PipelineError, RecordKind, RecordStore,
    StageObserver, TaskState,
};
use serde_json::json;

#[test]
fn golden_run_completes_every_stage() {
    let bundle = golden_bundle();
    let store = MemoryStore::new();
    let out = execute(
        &task(),
        &providers(&bundle),
        &config(),
        &store,
        &mut NoopObserver,
        t0(),
    )
    .unwrap();

    assert_eq!(out.record.logged_stages(), (1..=8).collect::<Vec<u8>>());
    assert!(!out.record.degraded);
    let report = &out.report;
    assert_eq!(report.template, "enterprise");
    assert_eq!(report.hypotheses.len(), 3);
    assert_eq!(report.facts.len(), 15);
    assert_eq!(report.derived_facts.len(), 3);
    assert_eq!(report.contradictions.len(), 1);
    assert_eq!(report.coverage.requirements.len(), 7);
    assert!((report.coverage.score - 1.0).abs() < 1e-12);
    assert!(report
        .coverage
        .requirements
        .iter()
        .all(|r| r.status != CoverageStatus::Missing));
    assert_eq!(report.gap_iterations.len(), 1);
    assert_eq!(report.knowledge_graph.relationships.len(), 8);
    assert_eq!(report.generated_at, "2026-03-15");

    let verify: Vec<_> = report
        .facts
        .iter()
        .filter(|f| f.verdict == Some(Verdict::Verify))
        .collect();
    assert_eq!(verify.len(), 1);
    assert!(verify[0].content.contains("Seagull"));

    // Every script entry was used.
    assert_eq!(bundle.primary.remaining(), 0);
    assert_eq!(store.count(Some(RecordKind::Fact)).unwrap(), 15);
    assert_eq!(store.count(Some(RecordKind::Report)).unwrap(), 1);
    assert_eq!(store.count(Some(RecordKind::Hypothesis)).unwrap(), 3);
    assert_eq!(store.count(Some(RecordKind::GapLog)).unwrap(), 1);
}

#[test]
fn golden_search_follows_up_on_high_quality_results() {
    let bundle = golden_bundle();
    let p = providers(&bundle);
    let out = execute(
        &task(),
        &p,
        &config(),
        &MemoryStore::new(),
        &mut NoopObserver,
        t0(),
    )
    .unwrap();
    let search = &out.record.stage_outputs[&4];
    let results = search["results"].as_array().unwrap();
    assert_eq!(results.len(), 13);
    assert!(results.iter().any(|r| r["depth"] == 1));
    assert_eq!(search["discarded"], 1);
    assert!(results
        .iter()
        .all(|r| !r["raw"]["url"].as_str().unwrap().contains("example-sports")));
    assert!(p
        .search
        .stats()
        .queries()
        .iter()
        .any(|q| q == "BYD megawatt flash charging"));
}

#[test]
fn golden_chained_derivation_confidence() {
    let bundle = golden_bundle();
    let out = execute(
        &task(),
        &providers(&bundle),
        &config(),
        &MemoryStore::new(),
        &mut NoopObserver,
        t0(),
    )
    .unwrap();
    let by_start = |p: &str| {
        out.report
            .derived_facts
            .iter()
            .find(|d| d.content.starts_with(p))
            .unwrap()
            .confidence
    };
    // Probable (0.8) over two accepted facts.
    assert!((by_start("BYD builds cars") - 0.8).abs() < 1e-9);
    // Probable over a basis that includes the Verify fact (0.5).
    assert!((by_start("Vertical integration") - 0.4).abs() < 1e-9);
    // Possible (0.6) over the two derivations above.
    assert!((by_start("BYD's overseas growth") - 0.24).abs() < 1e-9);
}

#[test]
fn report_json_is_byte_identical_across_runs() {
    let run = || {
        let bundle = golden_bundle();
        execute(
            &task(),
            &providers(&bundle),
            &config(),
            &MemoryStore::new(),
            &mut NoopObserver,
            t0(),
        )
        .unwrap()
        .report
        .to_json()
    };
    let a = run();
    assert_eq!(a, run());
    let md_a = render_markdown(
        &hdr_core::report::ReportDocument::from_json(&a).unwrap(),
        &TemplateSet::default(),
    );
    assert!(md_a.starts_with("# Enterprise research report"));
}

#[test]
fn hypothesis_shortfall_fails_stage_two() {
    let two = json!({"hypotheses": [
        {"statement": "BYD grows abroad", "rationale": "r", "verification_method": "v", "expected_outcomes": "e"},
        {"statement": "BYD batteries are cheap", "rationale": "r", "verification_method": "v", "expected_outcomes": "e"}
    ]});
    let bundle = patched_bundle(|v| {
        for _ in 0..2 {
            prepend_completion(v, json!({"template_id": "HypothesisGen", "response": two}));
        }
    });
    let err = execute(
        &task(),
        &providers(&bundle),
        &config(),
        &MemoryStore::new(),
        &mut NoopObserver,
        t0(),
    )
    .unwrap_err();
    assert_eq!(err.failed_stage(), Some(2));
}

#[test]
fn failed_gap_search_degrades_but_still_reports() {
    let bundle = patched_bundle(|v| {
        v["searches"]
            .as_array_mut()
            .unwrap()
            .insert(0, json!({"query_match": "BYD megawatt flash charging", "error": "unavailable", "sticky": true}));
    });
    let store = MemoryStore::new();
    let out = execute(
        &task(),
        &providers(&bundle),
        &config(),
        &store,
        &mut NoopObserver,
        t0(),
    )
    .unwrap();
    assert!(out.record.degraded);
    assert!(out.report.degraded);
    assert_eq!(out.report.facts.len(), 13);
    assert!((out.report.coverage.score - 6.0 / 7.0).abs() < 1e-9);
    assert!(out
        .report
        .notes
        .iter()
        .any(|n| n == hdr_core::report::DEGRADED_NOTE));
    assert_eq!(out.record.logged_stages(), (1..=8).collect::<Vec<u8>>());
}

struct CrashAt(u8);

impl StageObserver for CrashAt {
    fn stage_started(&mut self, stage: u8) -> Result<(), String> {
        if stage == self.0 {
            Err("worker killed".into())
        } else {
            Ok(())
        }
    }
}

#[test]
fn crash_then_resume_matches_a_clean_run() {
    let store = MemoryStore::new();
    let err = execute(
        &task(),
        &providers(&golden_bundle()),
        &config(),
        &store,
        &mut CrashAt(4),
        t0(),
    )
    .unwrap_err();
    assert_eq!(err.failed_stage(), Some(4));
    assert_eq!(store.count(None).unwrap(), 0);

    let mut retried = task();
    retried.attempt = 2;
    let out = resume(
        &retried,
        3,
        &providers(&golden_bundle()),
        &config(),
        &store,
        &mut NoopObserver,
        t0(),
    )
    .unwrap()
    .unwrap();
    let clean = execute(
        &task(),
        &providers(&golden_bundle()),
        &config(),
        &MemoryStore::new(),
        &mut NoopObserver,
        t0(),
    )
    .unwrap();
    assert_eq!(out.report.to_json(), clean.report.to_json());
    assert_eq!(
        store.count(Some(RecordKind::Fact)).unwrap(),
        clean.report.facts.len()
    );
}

#[test]
fn persisting_twice_stores_nothing_new() {
    let store = MemoryStore::new();
    let first = execute(
        &task(),
        &providers(&golden_bundle()),
        &config(),
        &store,
        &mut NoopObserver,
        t0(),
    )
    .unwrap();
    let before = store.count(None).unwrap();
    let second = execute(
        &task(),
        &providers(&golden_bundle()),
        &config(),
        &store,
        &mut NoopObserver,
        t0(),
    )
    .unwrap();
    assert_eq!(store.count(None).unwrap(), before);
    assert!(second.persisted.stored.is_empty());
    assert_eq!(
        second.persisted.deduplicated.values().sum::<usize>(),
        first.persisted.stored.values().sum::<usize>()
    );
}

#[test]
fn resume_leaves_completed_tasks_alone_and_refuses_exhausted_ones() {
    let p = providers(&golden_bundle());
    let store = MemoryStore::new();
    let mut t = task();
    t.state = TaskState::Completed;
    assert!(
        resume(&t, 3, &p, &config(), &store, &mut NoopObserver, t0())
            .unwrap()
            .is_none()
    );

    t.state = TaskState::Running;
    t.attempt = 4;
    assert_eq!(
        resume(&t, 3, &p, &config(), &store, &mut NoopObserver, t0()).unwrap_err(),
        PipelineError::AttemptsExhausted { attempt: 4, max: 3 }
    );

    t.state = TaskState::Queued;
    t.attempt = 1;
    assert_eq!(
        execute(&t, &p, &config(), &store, &mut NoopObserver, t0()).unwrap_err(),
        PipelineError::TaskNotRunning(TaskState::Queued)
    );
    assert_eq!(p.llm.stats().total_calls(), 0);
}

#[test]
fn a_single_medium_gap_runs_one_bounded_iteration() {
    let bundle = patched_bundle(|v| {
        drop_template(v, "GapIdentify");
        let list = v["completions"].as_array_mut().unwrap();
        list.push(json!({"template_id": "GapIdentify", "response": {"gaps": [
            {"name": "Charging technology", "type": "Informational", "importance": "Medium",
             "reason": "charging is unexamined", "queries": ["BYD megawatt flash charging"], "inferable": false}
        ]}}));
        list.push(json!({"template_id": "GapIdentify", "response": {"gaps": []}}));
    });
    let out = execute(
        &task(),
        &providers(&bundle),
        &config(),
        &MemoryStore::new(),
        &mut NoopObserver,
        t0(),
    )
    .unwrap();
    assert_eq!(out.record.iterations.len(), 1);
    assert!(out.record.iterations[0].queries.len() <= 4);
    assert_eq!(out.record.iterations[0].facts_added, 2);
}
