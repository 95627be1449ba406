//! Step and trajectory records: what a run leaves behind.
//!
//! Everything here is immutable after construction and carries integral
//! millisecond durations, so serialized traces replay byte-for-byte.

use serde::{Deserialize, Serialize};

use crate::action::{Action, ActionKind};
use crate::verification::Verdict;

/// A reasoning trace emitted before an action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub text: String,
    pub token_count: usize,
    /// Natural-log probabilities; may be empty when the backend omits them.
    pub token_logprobs: Vec<f64>,
}

impl ReasoningTrace {
    /// Builds a trace; `token_count` falls back to a whitespace-token count
    /// when the backend supplied no per-token data.
    pub fn new(text: impl Into<String>, token_count: usize, token_logprobs: Vec<f64>) -> Self {
        ReasoningTrace {
            text: text.into(),
            token_count,
            token_logprobs,
        }
    }

    pub fn validate(&self) -> Result<(), TrajectoryInvariantError> {
        if !self.token_logprobs.is_empty() && self.token_count != self.token_logprobs.len() {
            return Err(TrajectoryInvariantError::TokenCountMismatch {
                token_count: self.token_count,
                logprobs: self.token_logprobs.len(),
            });
        }
        if self.token_logprobs.iter().any(|lp| *lp > 0.0) {
            return Err(TrajectoryInvariantError::PositiveLogprob);
        }
        Ok(())
    }
}

/// What kind of result a tool produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    SearchResults,
    Extraction,
    AnswerEcho,
    ToolOutput,
    ToolError,
}

/// The environment's reply to an executed action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub kind: ObservationKind,
    /// Structured text payload (JSON for tool results, plain text otherwise).
    pub payload: String,
    pub latency_ms: u64,
}

/// Which pathway produced the executed step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Small model with explicit reasoning.
    System2Draft,
    /// Large model skipping reasoning.
    System1Draft,
    /// Full-capacity regeneration after a rejected (or absent) draft.
    Fallback,
}

/// Per-step wall-time decomposition in integral milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingBreakdown {
    pub draft_slm_ms: u64,
    pub draft_llm_ms: u64,
    pub verify_ms: u64,
    pub tool_ms: u64,
    pub fallback_reasoning_ms: u64,
    pub wall_step_ms: u64,
}

impl TimingBreakdown {
    pub fn validate(&self) -> Result<(), TrajectoryInvariantError> {
        if self.wall_step_ms < self.tool_ms {
            return Err(TrajectoryInvariantError::WallBelowTool {
                wall: self.wall_step_ms,
                tool: self.tool_ms,
            });
        }
        Ok(())
    }
}

/// One draft-verify-execute iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub reasoning: Option<ReasoningTrace>,
    pub action: Action,
    pub observation: Observation,
    pub provenance: Provenance,
    pub verdict: Option<Verdict>,
    pub timing: TimingBreakdown,
    /// Natural-log probabilities of the executed action's tokens, when the
    /// producing backend reported them; consumed by the entropy analysis.
    #[serde(default)]
    pub action_logprobs: Vec<f64>,
}

impl Step {
    pub fn validate(&self) -> Result<(), TrajectoryInvariantError> {
        if let Some(reasoning) = &self.reasoning {
            reasoning.validate()?;
        }
        self.timing.validate()?;
        if self.provenance == Provenance::Fallback {
            match &self.verdict {
                Some(v) if !v.accepted => {}
                _ => return Err(TrajectoryInvariantError::FallbackWithoutRejection),
            }
        }
        Ok(())
    }
}

/// An ordered run of steps for one task; the persisted unit of analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub question: String,
    pub steps: Vec<Step>,
    pub final_answer: Option<String>,
    pub config_digest: String,
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), TrajectoryInvariantError> {
        for step in &self.steps {
            step.validate()?;
        }
        let finish_positions: Vec<usize> = self
            .steps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.action.kind() == ActionKind::Finish)
            .map(|(i, _)| i)
            .collect();
        if finish_positions.len() > 1 {
            return Err(TrajectoryInvariantError::MultipleFinish);
        }
        if let Some(&pos) = finish_positions.first() {
            if pos + 1 != self.steps.len() {
                return Err(TrajectoryInvariantError::FinishNotLast);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrajectoryInvariantError {
    #[error("token_count {token_count} does not match {logprobs} logprobs")]
    TokenCountMismatch { token_count: usize, logprobs: usize },
    #[error("token logprob above zero")]
    PositiveLogprob,
    #[error("wall_step_ms {wall} below tool_ms {tool}")]
    WallBelowTool { wall: u64, tool: u64 },
    #[error("fallback step without a rejecting verdict")]
    FallbackWithoutRejection,
    #[error("more than one finish step")]
    MultipleFinish,
    #[error("finish step is not the last step")]
    FinishNotLast,
}
