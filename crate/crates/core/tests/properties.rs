use std::collections::BTreeMap;

use hdr_core::analysis::{propagate, validation_confidence, verdict, Verdict};
use hdr_core::gap::{select_queries, GapKind, Importance, ResearchGap, MAX_QUERIES_PER_ITERATION};
use hdr_core::report::{cov_score, CoverageStatus};
use hdr_core::search::{
    has_search_syntax, optimize_with, OptimizerContext, QualityScore, QualityWeights,
};
use hdr_core::text::content_hash;
use hdr_core::understanding::{TemporalCategory, TemporalContext};
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

fn status() -> impl Strategy<Value = CoverageStatus> {
    prop_oneof![
        Just(CoverageStatus::Covered),
        Just(CoverageStatus::Partial),
        Just(CoverageStatus::Missing)
    ]
}

fn importance() -> impl Strategy<Value = Importance> {
    prop_oneof![
        Just(Importance::High),
        Just(Importance::Medium),
        Just(Importance::Low)
    ]
}

fn rank(v: Verdict) -> u8 {
    match v {
        Verdict::Reject => 0,
        Verdict::Verify => 1,
        Verdict::Accept => 2,
    }
}

proptest! {
    #[test]
    fn quality_is_bounded_and_monotone(r in unit(), a in unit(), f in unit(), c in unit(), bump in unit()) {
        let w = QualityWeights::default();
        let q = QualityScore::from_dimensions(r, a, f, c, &w).composite;
        prop_assert!((0.0..=1.0).contains(&q));
        let higher = QualityScore::from_dimensions((r + bump).min(1.0), a, f, c, &w).composite;
        prop_assert!(higher >= q - 1e-12);
    }

    #[test]
    fn verdict_is_monotone_in_confidence(x in unit(), y in unit()) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(rank(verdict(lo)) <= rank(verdict(hi)));
    }

    #[test]
    fn validation_confidence_is_a_ratio(addressing in 1..50usize, extra in 0..5usize, sigma in unit()) {
        for confirming in 0..=addressing + extra {
            let c = validation_confidence(confirming, addressing, sigma);
            prop_assert!((0.0..=1.0).contains(&c));
        }
        prop_assert_eq!(validation_confidence(0, 0, sigma), sigma);
    }

    #[test]
    fn propagation_never_exceeds_the_weakest_basis(r in unit(), basis in prop::collection::vec(unit(), 1..8)) {
        let c = propagate(r, &basis).unwrap();
        prop_assert!(basis.iter().all(|b| c <= *b + 1e-15));
    }

    #[test]
    fn coverage_score_is_bounded(statuses in prop::collection::vec(status(), 1..20)) {
        let s = cov_score(&statuses).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        let mut better = statuses.clone();
        better.iter_mut().for_each(|x| if *x == CoverageStatus::Missing { *x = CoverageStatus::Partial });
        prop_assert!(cov_score(&better).unwrap() >= s);
    }

    #[test]
    fn gap_queries_are_capped_and_significant(
        gaps in prop::collection::vec((importance(), prop::collection::vec("[a-d]{1,3}", 0..4)), 0..8)
    ) {
        let gaps: Vec<ResearchGap> = gaps
            .into_iter()
            .enumerate()
            .map(|(i, (importance, queries))| ResearchGap {
                name: format!("g{i}"),
                kind: GapKind::Informational,
                importance,
                reason: String::new(),
                queries,
                inferable: false,
            })
            .collect();
        let picked = select_queries(&gaps);
        prop_assert!(picked.len() <= MAX_QUERIES_PER_ITERATION);
        let mut seen = BTreeMap::new();
        for q in &picked {
            prop_assert!(seen.insert(q.clone(), ()).is_none());
            prop_assert!(gaps.iter().any(|g| g.importance != Importance::Low && g.queries.contains(q)));
        }
        if gaps.iter().all(|g| g.importance == Importance::Low) {
            prop_assert!(picked.is_empty());
        }
    }

    #[test]
    fn optimizer_keeps_the_query_first_and_never_repeats(
        q in "[A-Za-z ]{1,30}",
        site in proptest::option::of("[a-z]{2,8}\\.com"),
        phrase in proptest::option::of("[a-z]{2,8} [a-z]{2,8}"),
        temporal in any::<bool>(),
    ) {
        let now = chrono::NaiveDate::from_ymd_opt(2026, 3, 15).unwrap();
        let ctx = OptimizerContext {
            temporal: temporal.then(|| TemporalContext::resolve(TemporalCategory::ThisYear, now, None).unwrap()),
            site,
            phrase,
        };
        let out = optimize_with(&q, &ctx);
        prop_assert_eq!(&out[0], q.trim());
        let mut dedup = out.clone();
        dedup.sort();
        dedup.dedup();
        prop_assert_eq!(dedup.len(), out.len());
        if has_search_syntax(&q) {
            prop_assert_eq!(out.len(), 1);
        }
    }

    #[test]
    fn content_hash_ignores_case_and_spacing(words in prop::collection::vec("[a-zA-Z0-9]{1,6}", 1..8)) {
        let plain = words.join(" ");
        let noisy = format!("  {}  ", words.iter().map(|w| w.to_uppercase()).collect::<Vec<_>>().join("   "));
        prop_assert_eq!(content_hash(&plain), content_hash(&noisy));
    }
}
