//! Heterogeneous drafting: two candidate steps per decision, selected by
//! action type.
//!
//! At each step two generations are issued concurrently: the small model
//! with explicit reasoning and the large model skipping reasoning. The
//! routing signal is the action type of the reasoned draft: Search keeps
//! the reasoned draft, Visit takes the large-model draft unless the small
//! model produced a long reasoning trace worth preserving for later steps.

use futures::join;
use serde::{Deserialize, Serialize};

use crate::action::{extract_action, Action, ActionKind};
use crate::backends::{
    BackendError, BackendResponse, DecodingParams, GenerationMode, ModelBackend, Role,
};
use crate::context::AgentContext;
use crate::trajectory::ReasoningTrace;

/// Which pathway produced a draft.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DraftSource {
    /// Small model with explicit reasoning.
    System2,
    /// Large model, action only.
    System1,
}

/// A candidate step awaiting verification.
#[derive(Debug, Clone, PartialEq)]
pub struct Draft {
    pub source: DraftSource,
    /// Present only on System2 drafts.
    pub reasoning: Option<ReasoningTrace>,
    pub action: Action,
    pub raw: BackendResponse,
    /// Logprobs of the tokens belonging to the action line, when reported.
    pub action_logprobs: Vec<f64>,
}

impl Draft {
    /// Parses a backend completion into a draft. System2 completions carry
    /// the action on the final line of the text, preceded by reasoning;
    /// System1 completions are the action alone (any stray preamble is
    /// discarded so the reasoning stays absent).
    pub fn from_response(source: DraftSource, raw: BackendResponse) -> Result<Self, DraftFailure> {
        let Some((action, prefix, offset)) = extract_action(&raw.text) else {
            return Err(DraftFailure {
                error: format!("no parsable action in completion: {:?}", raw.text),
                latency_ms: raw.latency_ms,
            });
        };
        let (reasoning_logprobs, action_logprobs) =
            split_logprobs_at(&raw.tokens, &raw.token_logprobs, offset);
        let reasoning = match source {
            DraftSource::System1 => None,
            DraftSource::System2 => {
                let text = prefix.trim();
                if text.is_empty() {
                    None
                } else {
                    let token_count = if reasoning_logprobs.is_empty() {
                        text.split_whitespace().count()
                    } else {
                        reasoning_logprobs.len()
                    };
                    Some(ReasoningTrace::new(text, token_count, reasoning_logprobs))
                }
            }
        };
        Ok(Draft {
            source,
            reasoning,
            action,
            raw,
            action_logprobs,
        })
    }
}

/// Splits per-token logprobs at a byte offset into (before, from) halves;
/// a token straddling the boundary counts as part of the action.
fn split_logprobs_at(tokens: &[String], logprobs: &[f64], offset: usize) -> (Vec<f64>, Vec<f64>) {
    if tokens.len() != logprobs.len() || tokens.is_empty() {
        return (Vec::new(), logprobs.to_vec());
    }
    let mut consumed = 0usize;
    let mut split = 0usize;
    for (i, token) in tokens.iter().enumerate() {
        if consumed + token.len() <= offset {
            consumed += token.len();
            split = i + 1;
        } else {
            break;
        }
    }
    (logprobs[..split].to_vec(), logprobs[split..].to_vec())
}

/// A failed draft attempt: the step degrades to the other side.
#[derive(Debug, Clone, PartialEq)]
pub struct DraftFailure {
    pub error: String,
    pub latency_ms: u64,
}

impl From<BackendError> for DraftFailure {
    fn from(e: BackendError) -> Self {
        DraftFailure {
            error: e.to_string(),
            latency_ms: 0,
        }
    }
}

/// Both candidate drafts for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct DraftPair {
    pub system2: Result<Draft, DraftFailure>,
    pub system1: Result<Draft, DraftFailure>,
}

impl DraftPair {
    /// Latency charged to the drafting phase of the small-model side.
    pub fn slm_ms(&self) -> u64 {
        match &self.system2 {
            Ok(d) => d.raw.latency_ms,
            Err(f) => f.latency_ms,
        }
    }

    /// Latency charged to the drafting phase of the large-model side.
    pub fn llm_ms(&self) -> u64 {
        match &self.system1 {
            Ok(d) => d.raw.latency_ms,
            Err(f) => f.latency_ms,
        }
    }

    /// Wall time of the drafting phase: both generations are issued
    /// concurrently, so the phase costs the slower side.
    pub fn wall_ms(&self) -> u64 {
        self.slm_ms().max(self.llm_ms())
    }
}

/// Routing parameters for draft selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    /// Reasoning-token threshold above which a Visit draft keeps the
    /// small-model reasoning anyway.
    pub tau_think: usize,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy { tau_think: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpeculationError {
    #[error("both drafts failed: system2: {system2}; system1: {system1}")]
    BothDraftsFailed { system2: String, system1: String },
    #[error("tau_think must be positive")]
    InvalidPolicy,
}

/// Token length of a draft's reasoning trace; 0 when absent.
pub fn reasoning_length(draft: &Draft) -> usize {
    draft.reasoning.as_ref().map_or(0, |t| t.token_count)
}

/// Action-aware selection over a draft pair.
///
/// With both sides present, the reasoned draft's action type routes:
/// Search keeps System2; Visit takes System1 unless the reasoning length
/// exceeds `tau_think`; Finish and other tools keep System2 (they are
/// reasoning-sensitive, so they get the Search treatment). A missing side
/// forces the other. The returned draft is always one of the pair's
/// members, unmodified.
pub fn select_draft<'a>(
    pair: &'a DraftPair,
    policy: &SelectionPolicy,
) -> Result<&'a Draft, SpeculationError> {
    if policy.tau_think == 0 {
        return Err(SpeculationError::InvalidPolicy);
    }
    match (&pair.system2, &pair.system1) {
        (Ok(s2), Ok(s1)) => match s2.action.kind() {
            ActionKind::Search | ActionKind::Finish | ActionKind::Other => Ok(s2),
            ActionKind::Visit => {
                if reasoning_length(s2) > policy.tau_think {
                    Ok(s2)
                } else {
                    Ok(s1)
                }
            }
        },
        (Ok(s2), Err(_)) => Ok(s2),
        (Err(_), Ok(s1)) => Ok(s1),
        (Err(f2), Err(f1)) => Err(SpeculationError::BothDraftsFailed {
            system2: f2.error.clone(),
            system1: f1.error.clone(),
        }),
    }
}

/// Issues the two draft generations concurrently and collects the pair.
pub struct Drafter<'a> {
    pub backend: &'a dyn ModelBackend,
    pub params: DecodingParams,
}

impl<'a> Drafter<'a> {
    /// Generates the System2 (SLM, with reasoning) and System1 (LLM,
    /// action only) drafts in parallel. Neither side is cancelled when the
    /// other finishes first; both results are retained for trace analysis.
    pub async fn draft_pair(&self, state: &AgentContext) -> DraftPair {
        let prompt = state.render_generation_prompt();
        let slm = self.backend.generate(
            Role::Slm,
            &prompt,
            GenerationMode::WithReasoning,
            &self.params,
        );
        let llm =
            self.backend
                .generate(Role::Llm, &prompt, GenerationMode::ActionOnly, &self.params);
        let (slm, llm) = join!(slm, llm);
        DraftPair {
            system2: slm
                .map_err(DraftFailure::from)
                .and_then(|r| Draft::from_response(DraftSource::System2, r)),
            system1: llm
                .map_err(DraftFailure::from)
                .and_then(|r| Draft::from_response(DraftSource::System1, r)),
        }
    }
}
