//! Model-backend contract shared by the drafting, verification, and
//! fallback paths.
//!
//! Two implementations ship: [`scripted::ScriptedBackend`], a deterministic
//! test double driven by a scenario file, and [`wire::WireBackend`], a
//! client for logprob-capable chat-completion endpoints. Both are safe to
//! call from concurrent tasks; every call is independent and stateless from
//! the caller's point of view.

pub mod scenario;
pub mod scripted;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::Timed;

pub use scenario::{load_scenario, ScenarioError, ScenarioScript};
pub use scripted::ScriptedBackend;
pub use wire::{WireBackend, WireConfig};

/// Which model a call is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Small drafting model.
    Slm,
    /// Large base model.
    Llm,
    /// Large model acting as the verification critic.
    Critic,
}

/// Whether a generation call may emit a reasoning preamble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    WithReasoning,
    ActionOnly,
}

/// Decoding parameters forwarded to the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            max_tokens: 2048,
            temperature: 0.0,
            seed: None,
        }
    }
}

/// Why a completion stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

/// One completion with optional per-token log probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    pub tokens: Vec<String>,
    /// Natural-log probabilities, one per token; empty when the endpoint
    /// does not supply them.
    pub token_logprobs: Vec<f64>,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
}

impl BackendResponse {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.tokens.len() != self.token_logprobs.len() {
            return Err(BackendError::Malformed(format!(
                "{} tokens but {} logprobs",
                self.tokens.len(),
                self.token_logprobs.len()
            )));
        }
        if self.token_logprobs.iter().any(|lp| *lp > 0.0) {
            return Err(BackendError::Malformed(
                "token logprob above zero".to_string(),
            ));
        }
        Ok(())
    }
}

/// Top-k next-token candidates under a prompt, sorted by descending logprob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextTokenDistribution {
    entries: Vec<(String, f64)>,
    k: usize,
}

impl NextTokenDistribution {
    /// Builds a distribution, sorting entries by descending logprob (ties
    /// broken by token text for determinism) and checking that the implied
    /// probability mass does not exceed 1 beyond rounding slack.
    pub fn new(mut entries: Vec<(String, f64)>) -> Result<Self, BackendError> {
        if entries.is_empty() {
            return Err(BackendError::Malformed("empty top-k".to_string()));
        }
        if entries.iter().any(|(_, lp)| *lp > 0.0 || !lp.is_finite()) {
            return Err(BackendError::Malformed(
                "top-k logprob above zero or non-finite".to_string(),
            ));
        }
        entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        let mass: f64 = entries.iter().map(|(_, lp)| lp.exp()).sum();
        if mass > 1.0 + 1e-6 {
            return Err(BackendError::Malformed(format!(
                "top-k probability mass {mass} exceeds 1"
            )));
        }
        let k = entries.len();
        Ok(NextTokenDistribution { entries, k })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Errors surfaced by backend calls. Each one reaches the orchestrator as a
/// draft (or verification) failure, never a crash.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend timed out after {0} ms")]
    Timeout(u64),
    #[error("wire error: {0}")]
    Wire(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("endpoint returned {got} top-k entries, needed {want}")]
    InsufficientTopK { got: usize, want: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// The generation primitive both drafts, the critic, and fallback use.
#[async_trait::async_trait]
pub trait ModelBackend: Send + Sync {
    /// Generates a completion for `context`. In `ActionOnly` mode the
    /// backend prompts the model to emit an action with no reasoning
    /// preamble.
    async fn generate(
        &self,
        role: Role,
        context: &str,
        mode: GenerationMode,
        params: &DecodingParams,
    ) -> Result<BackendResponse, BackendError>;

    /// Returns the top-`k` next-token candidates under `prompt`, with the
    /// call latency. `k` must be at least 20 so every Yes/No surface
    /// variant fits.
    async fn judge_next_token(
        &self,
        role: Role,
        prompt: &str,
        k: usize,
    ) -> Result<Timed<NextTokenDistribution>, BackendError>;
}

pub(crate) fn check_generate_preconditions(
    context: &str,
    params: &DecodingParams,
) -> Result<(), BackendError> {
    if context.is_empty() {
        return Err(BackendError::InvalidRequest("empty context".to_string()));
    }
    if params.max_tokens == 0 {
        return Err(BackendError::InvalidRequest(
            "max_tokens must be positive".to_string(),
        ));
    }
    Ok(())
}

pub(crate) fn check_judge_preconditions(k: usize) -> Result<(), BackendError> {
    if k < 20 {
        return Err(BackendError::InvalidRequest(format!(
            "judge top-k must be at least 20, got {k}"
        )));
    }
    Ok(())
}
