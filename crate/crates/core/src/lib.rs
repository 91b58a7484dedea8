//! Hypothesis-driven deep research engine.
//!
//! A query flows through understanding, hypothesis planning, search,
//! analysis, gap iteration and report generation. All external effects
//! (LLM completions, web search, time) enter through [`gateway`].

pub mod analysis;
pub mod catalog;
pub mod gap;
pub mod gateway;
pub mod planner;
pub mod report;
pub mod search;
pub mod text;
pub mod understanding;

mod json;
