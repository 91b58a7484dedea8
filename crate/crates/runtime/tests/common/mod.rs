#![allow(dead_code)]

use std::path::PathBuf;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use hdr_core::gateway::{load_script, parse_script, ScriptBundle};
use hdr_runtime::{PipelineConfig, Providers, ResearchTask};

pub const BYD_QUERY: &str =
    "How is BYD expanding overseas, and how do its battery technology and pricing shape its global competitiveness?";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn golden_bundle() -> ScriptBundle {
    load_script(fixture("byd_golden.json")).expect("golden fixture loads")
}

/// Golden script with some entries replaced or prepended.
pub fn patched_bundle(patch: impl FnOnce(&mut serde_json::Value)) -> ScriptBundle {
    let text = std::fs::read_to_string(fixture("byd_golden.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    patch(&mut v);
    parse_script(&v.to_string()).expect("patched script parses")
}

pub fn providers(bundle: &ScriptBundle) -> Providers {
    Providers {
        llm: bundle.llm_gateway(),
        search: bundle.search_gateway(),
    }
}

pub fn research_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2026, 3, 15).unwrap()
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 3, 15, 9, 0, 0).unwrap()
}

/// The golden script covers one follow-up level, so depth is pinned to 2.
pub fn config() -> PipelineConfig {
    let mut c = PipelineConfig::new(research_date());
    c.d_max = Some(2);
    c
}

pub fn task() -> ResearchTask {
    ResearchTask::detached(BYD_QUERY, t0())
}

/// Remove every completion entry for `template` from the script.
pub fn drop_template(v: &mut serde_json::Value, template: &str) {
    v["completions"]
        .as_array_mut()
        .unwrap()
        .retain(|e| e["template_id"] != template);
}

pub fn prepend_completion(v: &mut serde_json::Value, entry: serde_json::Value) {
    v["completions"].as_array_mut().unwrap().insert(0, entry);
}
