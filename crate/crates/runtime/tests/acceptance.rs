//! Acceptance suite. Runs every criterion, prints one line per criterion
//! and exits non-zero if any failed.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{Duration as Span, NaiveDate};
use common::*;
use hdr_core::analysis::{
    detect_contradictions, propagate, validation_confidence, verdict, ConfidenceGraph, Fact,
    GraphError, ResolutionStrategy, ValidationOutcome, Verdict,
};
use hdr_core::catalog::SourceCatalog;
use hdr_core::gap::{
    parse_gaps, select_queries, DEFAULT_MAX_ITERATIONS, MAX_QUERIES_PER_ITERATION,
};
use hdr_core::gateway::{parse_script, Clock, ManualClock, RawSearchResult, TemplateId};
use hdr_core::planner::{ResearchPlan, Stance};
use hdr_core::report::{self, cov_score, CoverageStatus};
use hdr_core::search::{
    optimize_with, subject_score, task_variants, OptimizerContext, QualityScore, QualityWeights,
    QueryOrigin, SearchConfig, SearchSession, SubjectProfile,
};
use hdr_core::understanding::{QueryUnderstanding, TemporalCategory, TemporalContext};
use hdr_runtime::{
    execute, MemoryStore, NoopObserver, PipelineOutput, RecordStore, Store, StoredRecord, TaskState,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use serde_json::{json, Value};

const GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

fn run_golden(bundle: &hdr_core::gateway::ScriptBundle) -> PipelineOutput {
    execute(
        &task(),
        &providers(bundle),
        &config(),
        &MemoryStore::new(),
        &mut NoopObserver,
        t0(),
    )
    .unwrap()
}

fn run_patched(patch: impl FnOnce(&mut Value)) -> PipelineOutput {
    run_golden(&patched_bundle(patch))
}

fn replace_gaps(v: &mut Value, replies: Vec<Value>, sticky_last: bool) {
    drop_template(v, "GapIdentify");
    let n = replies.len();
    let list = v["completions"].as_array_mut().unwrap();
    for (i, r) in replies.into_iter().enumerate() {
        list.push(json!({"template_id": "GapIdentify", "response": {"gaps": r}, "sticky": sticky_last && i + 1 == n}));
    }
}

fn gap(name: &str, importance: &str, queries: &[&str]) -> Value {
    json!({"name": name, "type": "Informational", "importance": importance, "reason": "missing evidence",
           "queries": queries, "inferable": false})
}

// 1 -------------------------------------------------------------------------

fn equation_oracles() {
    // Result quality.
    for w in [
        QualityWeights::default(),
        QualityWeights {
            relevance: 0.25,
            authority: 0.25,
            freshness: 0.25,
            completeness: 0.25,
        },
    ] {
        for r in GRID {
            for a in GRID {
                for f in GRID {
                    for c in GRID {
                        let oracle = w.relevance * r
                            + w.authority * a
                            + w.freshness * f
                            + w.completeness * c;
                        let got = QualityScore::from_dimensions(r, a, f, c, &w).composite;
                        assert!(
                            close(got, oracle),
                            "quality({r},{a},{f},{c}) = {got}, oracle {oracle}"
                        );
                    }
                }
            }
        }
    }

    // Subject relevance.
    for lambda in GRID.iter().copied().chain([0.4]) {
        for lex in GRID {
            for sem in GRID {
                let oracle = lambda * lex + (1.0 - lambda) * sem;
                assert!(close(subject_score(lex, sem, lambda), oracle));
            }
        }
    }
    let profile = SubjectProfile::new("BYD")
        .unwrap()
        .with_aliases(["BYD Auto"])
        .with_descriptors(["electric vehicle", "battery"]);
    for (title, snippet) in [
        ("BYD opens plant", "electric vehicle battery output"),
        ("Build Your Dreams studio", "dance lessons"),
        ("Auto show", "battery electric vehicle news"),
    ] {
        let oracle = 0.4 * profile.lexical(title, snippet)
            + 0.6 * profile.semantic(&format!("{title} {snippet}"));
        assert!(close(profile.relevance(title, snippet), oracle));
    }

    // Verification confidence and verdict.
    for addressing in 0..=10usize {
        for confirming in 0..=addressing {
            for sigma in GRID {
                let conf_oracle = if addressing == 0 {
                    sigma
                } else {
                    confirming as f64 / addressing as f64
                };
                let conf = validation_confidence(confirming, addressing, sigma);
                assert!(
                    close(conf, conf_oracle),
                    "conf({confirming},{addressing}) = {conf}"
                );
                let verdict_oracle = if conf_oracle >= 0.8 {
                    Verdict::Accept
                } else if conf_oracle >= 0.5 {
                    Verdict::Verify
                } else {
                    Verdict::Reject
                };
                assert_eq!(
                    verdict(conf),
                    verdict_oracle,
                    "verdict({confirming},{addressing})"
                );
            }
        }
    }

    // Propagation over every basis multiset of size 1..=3.
    let mut bases: Vec<Vec<f64>> = GRID.iter().map(|x| vec![*x]).collect();
    for _ in 0..2 {
        let mut next = Vec::new();
        for b in bases
            .iter()
            .filter(|b| b.len() == bases.last().unwrap().len())
        {
            for x in GRID {
                let mut e = b.clone();
                e.push(x);
                next.push(e);
            }
        }
        bases.extend(next);
    }
    for r in GRID {
        for b in &bases {
            let mut oracle = f64::INFINITY;
            for x in b {
                if *x < oracle {
                    oracle = *x;
                }
            }
            oracle *= r;
            assert!(close(propagate(r, b).unwrap(), oracle));
        }
    }
    assert_eq!(propagate(0.9, &[]), None);

    // Coverage score over all status multisets of size 0..=8.
    for n in 0..=8usize {
        for covered in 0..=n {
            for partial in 0..=(n - covered) {
                let missing = n - covered - partial;
                let statuses: Vec<CoverageStatus> =
                    std::iter::repeat_n(CoverageStatus::Covered, covered)
                        .chain(std::iter::repeat_n(CoverageStatus::Partial, partial))
                        .chain(std::iter::repeat_n(CoverageStatus::Missing, missing))
                        .collect();
                match cov_score(&statuses) {
                    None => assert_eq!(n, 0),
                    Some(s) => {
                        assert!(close(s, (covered as f64 + 0.5 * partial as f64) / n as f64))
                    }
                }
            }
        }
    }

    // Report objective.
    for (alpha, beta, gamma) in [(0.4, 0.4, 0.2), (0.5, 0.25, 0.25), (1.0, 0.0, 0.0)] {
        let w = report::QualityWeights::new(alpha, beta, gamma).unwrap();
        for c in GRID {
            for a in GRID {
                for t in GRID {
                    let got = report::composite_quality(c, a, t, &w).unwrap().composite;
                    assert!(close(got, alpha * c + beta * a + gamma * t));
                }
            }
        }
    }
    assert!(report::QualityWeights::new(0.5, 0.5, 0.5).is_err());
}

// 2 -------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Dag {
    leaves: Vec<f64>,
    /// (strength, basis indices into the full node list)
    derived: Vec<(f64, Vec<usize>)>,
}

fn dag() -> impl Strategy<Value = Dag> {
    (1..=20usize)
        .prop_flat_map(|n| (1..=n).prop_map(move |l| (n, l)))
        .prop_flat_map(|(n, l)| {
            let leaves = prop::collection::vec(0.0..=1.0f64, l);
            let derived =
                prop::collection::vec((0.0..=1.0f64, prop::collection::vec(0..n, 1..=4)), n - l);
            (leaves, derived)
        })
        .prop_map(|(leaves, derived)| Dag { leaves, derived })
}

fn node(i: usize) -> String {
    format!("n{i:02}")
}

fn propagation_properties() {
    let started = Instant::now();
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 1000,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let cyclic = std::cell::Cell::new(0usize);
    runner
        .run(&dag(), |d| {
            let mut g = ConfidenceGraph::new();
            let l = d.leaves.len();
            for (i, c) in d.leaves.iter().enumerate() {
                g.add_leaf(&node(i), *c).unwrap();
            }
            for (k, (r, basis)) in d.derived.iter().enumerate() {
                let ids: Vec<String> = basis.iter().map(|b| node(*b)).collect();
                g.add_derived(&node(l + k), *r, &ids).unwrap();
            }
            if matches!(g.topological_order(), Err(GraphError::Cycle(_))) {
                cyclic.set(cyclic.get() + 1);
                prop_assert!(matches!(g.compute(), Err(GraphError::Cycle(_))));
            }
            g.prune_invalid();
            let order = g.topological_order().expect("pruned graph is acyclic");
            let conf = g.compute().unwrap();
            let position: BTreeMap<&str, usize> = order
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_str(), i))
                .collect();
            for id in &order {
                let basis = g.basis(id).unwrap();
                let r = g.strength(id).unwrap();
                let mut min = f64::INFINITY;
                for b in basis {
                    // Edges point backwards in the order (acyclic), and
                    // confidence never grows along an edge.
                    if let Some(pb) = position.get(b.as_str()) {
                        prop_assert!(*pb < position[id.as_str()]);
                    }
                    prop_assert!(conf[id] <= conf[b] + 1e-12);
                    min = min.min(conf[b]);
                }
                prop_assert!((conf[id] - r * min).abs() <= 1e-12);
            }
            Ok(())
        })
        .unwrap();
    assert!(cyclic.get() > 0, "generator never produced a cycle");
    assert!(
        started.elapsed() < Duration::from_secs(5),
        "took {:?}",
        started.elapsed()
    );
}

// 3 -------------------------------------------------------------------------

fn threshold_boundaries() {
    assert_eq!(verdict(0.8), Verdict::Accept);
    assert_eq!(verdict(0.5), Verdict::Verify);
    assert_eq!(verdict(0.4999), Verdict::Reject);
    assert_eq!(verdict(validation_confidence(4, 5, 0.0)), Verdict::Accept);
    assert_eq!(verdict(validation_confidence(1, 2, 0.0)), Verdict::Verify);
}

// 4 -------------------------------------------------------------------------

fn subject_locking() {
    let profile = SubjectProfile::new("BYD")
        .unwrap()
        .with_aliases(["BYD Auto", "BYD Company"])
        .with_descriptors(["electric vehicle", "battery", "automaker", "car"]);
    let topics = [
        "opens electric vehicle plant in Hungary",
        "battery electric car sales rise",
        "Blade battery cuts car cost",
        "automaker expands electric vehicle exports",
        "electric car prices fall again",
    ];
    let decoy_topics = [
        "dance academy opens new studio downtown",
        "fitness bootcamp adds weekend classes",
        "home renovation contest winners announced",
        "youth choir tours coastal towns",
        "battery-powered stage lights for the spring show",
    ];
    let mut results = Vec::new();
    for i in 0..50 {
        let t = topics[i % topics.len()];
        results.push(json!({
            "title": format!("BYD {t}"),
            "url": format!("https://news.example.com/byd/{i}"),
            "snippet": format!("BYD, the Chinese automaker, {t}; report {i} on the electric vehicle and battery business."),
            "published_at": "2026-02-01"
        }));
        let d = decoy_topics[i % decoy_topics.len()];
        results.push(json!({
            "title": format!("Build Your Dreams {d}"),
            "url": format!("https://community.example.org/bydreams/{i}"),
            "snippet": format!("Build Your Dreams club: {d}. Item {i} in the community bulletin."),
            "published_at": "2026-02-01"
        }));
    }
    let raws: Vec<RawSearchResult> = serde_json::from_value(Value::Array(results.clone())).unwrap();
    for r in raws.iter().filter(|r| r.url.contains("bydreams")) {
        assert_eq!(
            profile.lexical(&r.title, &r.snippet),
            0.0,
            "decoy must have lex = 0"
        );
    }
    let script = json!({"searches": [{"results": results}]});
    let bundle = parse_script(&script.to_string()).unwrap();
    let gateway = bundle.search_gateway();
    let catalog = SourceCatalog::default();
    let cfg = SearchConfig {
        max_results: 100,
        ..SearchConfig::default()
    };
    let mut session = SearchSession::new(&gateway, &catalog, Some(&profile), research_date(), cfg);
    let origin = QueryOrigin {
        task_id: "T1".into(),
        hypothesis_id: None,
        base_query: "BYD electric vehicles".into(),
        depth: 0,
    };
    let kept = session
        .run_query("BYD electric vehicles", &origin)
        .unwrap()
        .unwrap();
    let kept_decoys = kept
        .iter()
        .filter(|r| r.raw.url.contains("bydreams"))
        .count();
    let kept_targets = kept.iter().filter(|r| r.raw.url.contains("/byd/")).count();
    assert_eq!(session.discarded, 50, "decoys discarded");
    assert_eq!(kept_decoys, 0);
    assert_eq!(kept_targets, 50, "no target discarded");
}

// 5 -------------------------------------------------------------------------

fn gap_loop_bounds() {
    // (a) only Low gaps: no supplementary search.
    let out = run_patched(|v| {
        replace_gaps(
            v,
            vec![json!([gap("Dealer network", "Low", &["BYD dealer count"])])],
            true,
        )
    });
    assert_eq!(out.record.stage_outputs[&6]["supplementary_queries"], 0);
    assert!(out.record.iterations.is_empty());

    // (b) six proposed queries: four issued.
    let six: Vec<Value> = (1..=6)
        .map(|i| {
            gap(
                &format!("Gap {i}"),
                "High",
                &[&format!("BYD gap query {i}")],
            )
        })
        .collect();
    assert_eq!(
        select_queries(&parse_gaps(&json!({"gaps": six}).to_string())).len(),
        MAX_QUERIES_PER_ITERATION
    );
    let out = run_patched(|v| replace_gaps(v, vec![json!(six), json!([])], false));
    assert_eq!(out.record.iterations[0].queries.len(), 4);
    assert_eq!(out.record.stage_outputs[&6]["supplementary_queries"], 4);

    // (c) a gap that never closes still stops at the iteration budget.
    assert_eq!(DEFAULT_MAX_ITERATIONS, 2);
    let out = run_patched(|v| {
        replace_gaps(
            v,
            vec![json!([gap(
                "Charging",
                "High",
                &["BYD megawatt flash charging"]
            )])],
            true,
        )
    });
    assert_eq!(out.record.iterations.len(), 2);

    // (d) coverage on the golden fixture.
    let out = run_golden(&golden_bundle());
    let its = &out.record.iterations;
    assert!(!its.is_empty());
    let mut last = its[0].coverage_before;
    for it in its {
        assert!(
            it.coverage_before >= last - 1e-12 && it.coverage_after >= it.coverage_before - 1e-12
        );
        last = it.coverage_after;
    }
    let gain = last - its[0].coverage_before;
    assert!(gain >= 0.05, "coverage gain {gain}");
}

// 6 -------------------------------------------------------------------------

fn optimizer_branches() {
    let now = research_date();
    let recent = TemporalContext::resolve(TemporalCategory::Recent, now, None).unwrap();
    let full = OptimizerContext {
        temporal: Some(recent.clone()),
        site: Some("reuters.com".into()),
        phrase: Some("Blade battery".into()),
    };
    let table: Vec<(&str, OptimizerContext, Vec<&str>)> = vec![
        (
            "BYD exports site:europa.eu",
            full.clone(),
            vec!["BYD exports site:europa.eu"],
        ),
        (
            "BYD \"Blade battery\" cost",
            full.clone(),
            vec!["BYD \"Blade battery\" cost"],
        ),
        (
            "BYD exports",
            OptimizerContext::default(),
            vec!["BYD exports"],
        ),
        (
            "BYD exports",
            OptimizerContext {
                temporal: Some(recent.clone()),
                ..Default::default()
            },
            vec![
                "BYD exports",
                "2026 BYD exports",
                "BYD exports after:2025-12-15",
            ],
        ),
        (
            "BYD exports 2026",
            OptimizerContext {
                temporal: Some(recent),
                ..Default::default()
            },
            vec!["BYD exports 2026", "BYD exports 2026 after:2025-12-15"],
        ),
        (
            "BYD exports",
            OptimizerContext {
                site: Some("reuters.com".into()),
                ..Default::default()
            },
            vec!["BYD exports", "BYD exports site:reuters.com"],
        ),
        (
            "BYD exports",
            OptimizerContext {
                phrase: Some("Blade battery".into()),
                ..Default::default()
            },
            vec!["BYD exports", "BYD exports \"Blade battery\""],
        ),
        (
            "BYD exports",
            full,
            vec![
                "BYD exports",
                "2026 BYD exports",
                "BYD exports after:2025-12-15",
                "BYD exports site:reuters.com",
                "BYD exports \"Blade battery\"",
            ],
        ),
    ];
    for (q, ctx, expected) in table {
        assert_eq!(optimize_with(q, &ctx), expected, "query {q:?} with {ctx:?}");
    }
}

// 7 -------------------------------------------------------------------------

fn contradiction_priority() {
    let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok();
    let fact = |content: &str, url: &str, date: &str| {
        Fact::new(
            content.into(),
            url,
            "t",
            d(date),
            0.7,
            None,
            Stance::Neutral,
            None,
            "T1",
        )
    };
    let facts = vec![
        // Temporal: newer blog post against an older government figure.
        fact(
            "BYD Szeged plant output reached 20,000 cars",
            "https://autoblog.example.com/a",
            "2025-12-01",
        ),
        fact(
            "BYD Szeged plant output reached 5,000 cars",
            "https://www.kormany.gov.hu/b",
            "2024-06-01",
        ),
        // Authority: same period; the weaker source has more corroboration.
        fact(
            "BYD Rayong plant employs 1,000 workers",
            "https://www.reuters.com/c",
            "2025-10-01",
        ),
        fact(
            "BYD Rayong plant employs 3,000 workers",
            "https://autoblog.example.com/d",
            "2025-10-20",
        ),
        // Corroboration: same authority, same period.
        fact(
            "BYD Camacari plant cost $600 million",
            "https://autoblog.example.com/e",
            "2025-09-01",
        ),
        fact(
            "BYD Camacari plant cost $1 billion",
            "https://evnews.example.net/f",
            "2025-09-10",
        ),
    ];
    let counts = [(1, 1), (3, 3), (1, 1), (4, 4), (3, 3), (1, 1)];
    let validations: BTreeMap<String, ValidationOutcome> = facts
        .iter()
        .zip(counts)
        .map(|(f, (c, a))| {
            (
                f.id.clone(),
                ValidationOutcome::from_counts(f, c, a, Vec::new()),
            )
        })
        .collect();
    let pair = |i: usize, j: usize| format!("{} || {}", facts[i].content, facts[j].content);
    let script = json!({"completions": [
        {"template_id": "ContradictionCheck", "match": pair(0, 1), "response": {"kind": "Temporal"}},
        {"template_id": "ContradictionCheck", "match": pair(2, 3), "response": {"kind": "Direct"}},
        {"template_id": "ContradictionCheck", "match": pair(4, 5), "response": {"kind": "Direct"}}
    ]});
    let llm = parse_script(&script.to_string()).unwrap().llm_gateway();
    let subject: BTreeSet<String> = ["byd".to_string()].into();
    let out = detect_contradictions(
        &facts,
        &validations,
        &SourceCatalog::default(),
        &subject,
        &mut BTreeMap::new(),
        &llm,
    )
    .unwrap();
    assert_eq!(
        out.candidate_pairs, 3,
        "blocking pairs only same-plant facts"
    );
    let strategies: Vec<ResolutionStrategy> =
        out.contradictions.iter().map(|c| c.strategy_used).collect();
    assert_eq!(
        strategies,
        vec![
            ResolutionStrategy::TemporalPriority,
            ResolutionStrategy::AuthorityPriority,
            ResolutionStrategy::CorroborationPriority
        ]
    );
    let preferred: Vec<&str> = out
        .contradictions
        .iter()
        .map(|c| c.preferred.as_deref().unwrap())
        .collect();
    assert_eq!(
        preferred,
        vec![
            facts[0].id.as_str(),
            facts[2].id.as_str(),
            facts[4].id.as_str()
        ]
    );
}

// 8 -------------------------------------------------------------------------

fn runtime_correctness() {
    let s = Store::open_in_memory().unwrap();
    let clock = ManualClock::new(t0());
    let timeout = s.settings().heartbeat_timeout;
    s.register_worker("w", clock.now()).unwrap();
    let id = s.enqueue(BYD_QUERY, 0, clock.now()).unwrap();
    for attempt in 1..=3u32 {
        let t = s.claim("w", clock.now()).unwrap().unwrap();
        assert_eq!(t.attempt, attempt);
        clock.advance(Span::seconds(61));
        s.sweep(clock.now(), timeout).unwrap();
        let t = s.task(id).unwrap().unwrap();
        let expected = if attempt < 3 {
            TaskState::Queued
        } else {
            TaskState::Failed
        };
        assert_eq!(t.state, expected, "after attempt {attempt}");
    }
    assert_eq!(s.task(id).unwrap().unwrap().attempt, 3);

    let dir = tempfile::tempdir().unwrap();
    let shared = Arc::new(Store::open(dir.path().join("stress.db")).unwrap());
    for i in 0..50 {
        shared.enqueue(&format!("task {i}"), 0, t0()).unwrap();
    }
    let handles: Vec<_> = (0..4)
        .map(|w| {
            let s = shared.clone();
            std::thread::spawn(move || {
                let name = format!("w{w}");
                s.register_worker(&name, t0()).unwrap();
                let mut mine = Vec::new();
                while let Some(t) = s.claim(&name, t0()).unwrap() {
                    mine.push(t.id);
                }
                mine
            })
        })
        .collect();
    let claimed: Vec<i64> = handles
        .into_iter()
        .flat_map(|h| h.join().unwrap())
        .collect();
    assert_eq!(claimed.len(), 50);
    assert_eq!(claimed.iter().collect::<BTreeSet<_>>().len(), 50);

    let rec = StoredRecord::new(
        hdr_runtime::RecordKind::Fact,
        "BYD opened a plant",
        json!({}),
        1,
        t0(),
    );
    s.persist(&rec).unwrap();
    let before = s.count(None).unwrap();
    s.persist(&rec).unwrap();
    assert_eq!(s.count(None).unwrap(), before);
}

// 9 -------------------------------------------------------------------------

fn golden_end_to_end() {
    let a = run_golden(&golden_bundle());
    let b = run_golden(&golden_bundle());
    assert_eq!(
        a.report.to_json(),
        b.report.to_json(),
        "report JSON differs between runs"
    );
    assert_eq!(a.record.logged_stages(), (1..=8).collect::<Vec<u8>>());
    assert!(a.report.hypotheses.len() >= 3);
    assert!(a.report.facts.len() >= 10);
    assert!(!a.report.coverage.requirements.is_empty());
    assert!(a.report.coverage.score > 0.0);
}

// 10 ------------------------------------------------------------------------

fn call_budgets() {
    let bundle = golden_bundle();
    let p = providers(&bundle);
    let cfg = config();
    let out = execute(
        &task(),
        &p,
        &cfg,
        &MemoryStore::new(),
        &mut NoopObserver,
        t0(),
    )
    .unwrap();

    let understanding: QueryUnderstanding =
        serde_json::from_value(out.record.stage_outputs[&1].clone()).unwrap();
    let plan: ResearchPlan =
        serde_json::from_value(out.record.stage_outputs[&3]["plan"].clone()).unwrap();
    let k = plan.tasks.len();
    let n = plan
        .tasks
        .iter()
        .map(|t| task_variants(t, &understanding).len())
        .max()
        .unwrap();
    let d_max = cfg.d_max.unwrap();
    let stage4 = out.record.stage_outputs[&4]["queries_issued"]
        .as_u64()
        .unwrap() as usize;
    assert!(
        stage4 <= k * d_max * n,
        "{stage4} searches > {k}*{d_max}*{n}"
    );
    let gap_queries: usize = out.record.iterations.iter().map(|i| i.queries.len()).sum();
    assert_eq!(p.search.stats().searches() as usize, stage4 + gap_queries);

    let analysis = &out.record.stage_outputs[&6];
    let m = analysis["facts"].as_array().unwrap().len();
    let candidates = analysis["candidate_pairs"].as_u64().unwrap() as usize;
    let comparisons = p.llm.stats().calls(TemplateId::ContradictionCheck) as usize;
    assert!(comparisons <= m * m);
    assert!(
        candidates < m * (m - 1) / 2,
        "blocking kept {candidates} of {} pairs",
        m * (m - 1) / 2
    );
}

fn main() {
    let criteria: [(&str, fn()); 10] = [
        (
            "equation oracles agree on exhaustive grids",
            equation_oracles,
        ),
        (
            "propagation properties over 1,000 random DAGs",
            propagation_properties,
        ),
        ("validation threshold boundaries", threshold_boundaries),
        ("subject locking on a 100-result corpus", subject_locking),
        ("gap loop query and iteration bounds", gap_loop_bounds),
        ("optimizer branch table", optimizer_branches),
        ("contradiction resolution priority", contradiction_priority),
        (
            "queue lifecycle, concurrent claims, idempotent persistence",
            runtime_correctness,
        ),
        ("golden end-to-end run", golden_end_to_end),
        ("call budgets", call_budgets),
    ];
    std::panic::set_hook(Box::new(|info| eprintln!("  {info}")));
    let started = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let ok = catch_unwind(AssertUnwindSafe(check)).is_ok();
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2}: {} {name} ({} ms)",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_millis()
        );
    }
    println!(
        "acceptance: {}/{} passed in {:.2}s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
