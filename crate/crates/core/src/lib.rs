//! Speculative draft-verify runtime for tool-using research agents.
//!
//! Each step of the agent loop is drafted by two lightweight pathways in
//! parallel — a small model with explicit reasoning and a large model
//! skipping reasoning — routed by action type, checked by a
//! confidence-scored critic, and executed immediately on acceptance.
//! Rejected drafts fall back to full-capacity reasoning, so heavyweight
//! generation leaves the critical path whenever the critic is confident.
//!
//! The crate is organized to keep every mechanism testable without GPUs:
//!
//! - [`action`], [`trajectory`], [`context`]: shared domain types.
//! - [`backends`]: model-backend contract, a scripted deterministic double,
//!   and a wire client for logprob-capable chat-completion endpoints.
//! - [`tools`]: Search/Visit execution with fixtures and a result cache.
//! - [`speculation`]: concurrent dual drafting and action-aware selection.
//! - [`verification`]: audit-prompt critic scoring plus matching baselines.
//! - [`orchestrator`]: the speculate-verify loop, the fully-reasoning
//!   baseline loop, and trace serialization.
//! - [`analysis`]: offline metrics over traces and threshold profiling.
//! - [`simulator`]: discrete-event latency model with analytic oracles.

pub mod action;
pub mod analysis;
pub mod backends;
pub mod context;
pub mod orchestrator;
pub mod simulator;
pub mod speculation;
pub mod tools;
pub mod trajectory;
pub mod verification;

/// A value plus the latency (integral milliseconds) charged to obtain it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timed<T> {
    pub value: T,
    pub latency_ms: u64,
}

impl<T> Timed<T> {
    pub fn new(value: T, latency_ms: u64) -> Self {
        Timed { value, latency_ms }
    }
}
