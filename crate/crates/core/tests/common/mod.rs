//! Shared scenario/fixture builders for the integration suites.
//!
//! Each integration target uses its own subset of these helpers.
#![allow(dead_code)]

use std::sync::Arc;

use serde_json::{json, Value};
use specrun_core::backends::{load_scenario, ScriptedBackend};
use specrun_core::tools::{load_fixtures, FixtureToolBackend, ToolConfig, ToolExecutor};

pub fn slm_draft(step: usize, text: &str, latency_ms: u64) -> Value {
    json!({
        "role": "slm", "step": step, "mode": "with_reasoning",
        "text": text, "latency_ms": latency_ms
    })
}

pub fn llm_draft(step: usize, text: &str, latency_ms: u64) -> Value {
    json!({
        "role": "llm", "step": step, "mode": "action_only",
        "text": text, "latency_ms": latency_ms
    })
}

pub fn llm_full(step: usize, text: &str, latency_ms: u64) -> Value {
    json!({
        "role": "llm", "step": step, "mode": "with_reasoning",
        "text": text, "latency_ms": latency_ms
    })
}

/// Critic entry whose Yes mass dominates: score ln(0.9) - ln(0.1) > 0.
pub fn critic_accept(step: usize, latency_ms: u64) -> Value {
    json!({
        "role": "critic", "step": step,
        "topk": [["Yes", (0.9f64).ln()], ["No", (0.1f64).ln()]],
        "latency_ms": latency_ms
    })
}

/// Critic entry with no affirmative mass: p_acc floors at epsilon and the
/// score is far below any reasonable threshold.
pub fn critic_reject(step: usize, latency_ms: u64) -> Value {
    json!({
        "role": "critic", "step": step,
        "topk": [["No", (0.999f64).ln()]],
        "latency_ms": latency_ms
    })
}

pub fn scenario(entries: Vec<Value>) -> String {
    json!({"version": 1, "entries": entries}).to_string()
}

pub fn backend_from(entries: Vec<Value>) -> Arc<ScriptedBackend> {
    let script = load_scenario(&scenario(entries)).expect("scenario loads");
    Arc::new(ScriptedBackend::new(Arc::new(script)))
}

pub fn search_fixture(query: &str, latency_ms: u64) -> Value {
    json!({
        "query": query, "latency_ms": latency_ms,
        "items": [{"url": format!("http://{query}"), "title": query, "snippet": format!("about {query}")}]
    })
}

pub fn visit_fixture(url: &str, content: &str, latency_ms: u64) -> Value {
    json!({"url": url, "latency_ms": latency_ms, "content": content})
}

pub fn fixtures(search: Vec<Value>, visit: Vec<Value>) -> String {
    json!({"version": 1, "search": search, "visit": visit}).to_string()
}

pub fn tools_from(doc: &str) -> (Arc<FixtureToolBackend>, Arc<ToolExecutor>) {
    let backend = Arc::new(FixtureToolBackend::new(
        load_fixtures(doc).expect("fixtures load"),
    ));
    let executor = Arc::new(ToolExecutor::new(backend.clone(), ToolConfig::default()));
    (backend, executor)
}
