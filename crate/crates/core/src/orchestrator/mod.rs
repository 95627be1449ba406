//! The agent loop under the speculate-verify discipline, plus the
//! fully-reasoning baseline loop.
//!
//! Each step drafts two candidates concurrently, selects one by action
//! type, verifies it, and either executes the accepted action or falls
//! back to full-capacity reasoning. With the semantic policy the base
//! model is invoked exactly on fallback steps, which is the property that
//! keeps its reasoning off the critical path.
//!
//! Timing is composed from the latencies each call reports rather than
//! measured around the loop: scripted backends report scripted latencies,
//! so identical inputs produce identical traces; wire backends report
//! monotonic-clock measurements, so composed wall times approximate real
//! ones. Concurrent phases contribute their maximum, sequential phases
//! their sum.
//!
//! Matching verifier policies (exact / bounded edit distance) reproduce
//! the prior-work paradigm for comparison: the base model generates with
//! reasoning concurrently with draft execution, the reference generation
//! cost is charged to `verify_ms`, and the base action is executed on
//! mismatch.

pub mod trace;

use std::sync::Arc;

use futures::future::{select, Either};
use futures::join;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::{render_action, ActionKind};
use crate::backends::{BackendError, DecodingParams, GenerationMode, ModelBackend, Role};
use crate::context::AgentContext;
use crate::speculation::{
    select_draft, Draft, DraftSource, Drafter, SelectionPolicy, SpeculationError,
};
use crate::tools::{ToolError, ToolExecutor};
use crate::trajectory::{
    Observation, ObservationKind, Provenance, Step, TimingBreakdown, Trajectory,
};
use crate::verification::{match_verify, MatchPolicy, SemanticVerifier, Verdict, DEFAULT_EPSILON};

pub use trace::{parse_trace, serialize_trace, TraceError};

/// How drafts are verified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierPolicy {
    /// Confidence-scored critic over the audit prompt.
    Semantic,
    /// Exact match against a concurrently generated base action.
    Exact,
    /// Bounded edit distance against the base action.
    EditDistance(usize),
    /// Accept every draft (no critic call).
    AlwaysAccept,
    /// Reject every draft (every step falls back).
    AlwaysReject,
}

/// Per-run configuration; the digest of its canonical serialization is
/// recorded in every trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Acceptance threshold on the verifier score.
    pub tau: f64,
    /// Reasoning-length threshold for the Visit selection exception.
    pub tau_think: usize,
    pub max_steps: usize,
    pub verifier_policy: VerifierPolicy,
    /// Overlap tool execution with verification, discarding the result on
    /// rejection.
    pub prefetch: bool,
    pub seed: u64,
    /// Recent-steps window shown to the critic.
    pub window: usize,
    /// Cap on observation payloads kept in accumulated context, chars.
    pub observation_cap: usize,
    pub temperature: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tau: 0.0,
            tau_think: 512,
            max_steps: 30,
            verifier_policy: VerifierPolicy::Semantic,
            prefetch: false,
            seed: 0,
            window: 8,
            observation_cap: 8192,
            temperature: 0.0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.max_steps == 0 {
            return Err(OrchestratorError::InvalidConfig("max_steps must be >= 1"));
        }
        if self.tau_think == 0 {
            return Err(OrchestratorError::InvalidConfig("tau_think must be >= 1"));
        }
        if self.window == 0 {
            return Err(OrchestratorError::InvalidConfig("window must be >= 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Finished,
    StepBudgetExhausted,
}

/// Outcome of one task run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub trajectory: Trajectory,
    pub accept_count: usize,
    pub fallback_count: usize,
    pub step_count: usize,
    /// `fallback_count / step_count`, 0 for empty runs.
    pub intervention_rate: f64,
    pub wall_ms: u64,
    pub stop_reason: StopReason,
}

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(#[from] BackendError),
    #[error("malformed completion: {0}")]
    MalformedCompletion(String),
    #[error("trajectory invariant violated: {0}")]
    Invariant(#[from] crate::trajectory::TrajectoryInvariantError),
}

/// Drives the loop for one task at a time; independent instances may run
/// concurrently.
pub struct Orchestrator {
    backend: Arc<dyn ModelBackend>,
    tools: Arc<ToolExecutor>,
    config: RunConfig,
    verifier: SemanticVerifier,
    selection: SelectionPolicy,
    params: DecodingParams,
}

impl Orchestrator {
    pub fn new(
        backend: Arc<dyn ModelBackend>,
        tools: Arc<ToolExecutor>,
        config: RunConfig,
    ) -> Result<Self, OrchestratorError> {
        config.validate()?;
        let verifier = SemanticVerifier {
            window: config.window,
            ..SemanticVerifier::default()
        };
        let selection = SelectionPolicy {
            tau_think: config.tau_think,
        };
        let params = DecodingParams {
            temperature: config.temperature,
            seed: Some(config.seed),
            ..DecodingParams::default()
        };
        Ok(Orchestrator {
            backend,
            tools,
            config,
            verifier,
            selection,
            params,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Runs the speculate-verify loop until an executed Finish action or
    /// the step budget. Budget exhaustion is reported, not thrown.
    pub async fn run_task(
        &self,
        task_id: &str,
        question: &str,
    ) -> Result<RunReport, OrchestratorError> {
        self.run_loop(task_id, question, false).await
    }

    /// Runs the comparison loop: every step generated by the large model
    /// with reasoning, no speculation, no verification.
    pub async fn run_baseline(
        &self,
        task_id: &str,
        question: &str,
    ) -> Result<RunReport, OrchestratorError> {
        self.run_loop(task_id, question, true).await
    }

    async fn run_loop(
        &self,
        task_id: &str,
        question: &str,
        baseline: bool,
    ) -> Result<RunReport, OrchestratorError> {
        let mut state = AgentContext::new(question, self.config.observation_cap);
        let mut steps: Vec<Step> = Vec::new();
        let mut final_answer = None;
        let mut stop_reason = StopReason::StepBudgetExhausted;

        for _ in 0..self.config.max_steps {
            let step = if baseline {
                self.baseline_step(&state).await?
            } else {
                self.step(&state).await?
            };
            state.push(
                step.reasoning.as_ref().map(|t| t.text.clone()),
                render_action(&step.action),
                &step.observation.payload,
            );
            let finished = step.action.kind() == ActionKind::Finish
                && step.observation.kind == ObservationKind::AnswerEcho;
            if finished {
                final_answer = Some(step.observation.payload.clone());
            }
            steps.push(step);
            if finished {
                stop_reason = StopReason::Finished;
                break;
            }
        }

        let step_count = steps.len();
        let fallback_count = steps
            .iter()
            .filter(|s| s.provenance == Provenance::Fallback)
            .count();
        let accept_count = step_count - fallback_count;
        let wall_ms = steps.iter().map(|s| s.timing.wall_step_ms).sum();
        let trajectory = Trajectory {
            task_id: task_id.to_string(),
            question: question.to_string(),
            steps,
            final_answer,
            config_digest: self.config.digest(),
        };
        trajectory.validate()?;
        Ok(RunReport {
            trajectory,
            accept_count,
            fallback_count,
            step_count,
            intervention_rate: if step_count == 0 {
                0.0
            } else {
                fallback_count as f64 / step_count as f64
            },
            wall_ms,
            stop_reason,
        })
    }

    /// One speculate-verify iteration.
    pub async fn step(&self, state: &AgentContext) -> Result<Step, OrchestratorError> {
        match self.config.verifier_policy {
            VerifierPolicy::Exact => self.matching_step(state, MatchPolicy::Exact).await,
            VerifierPolicy::EditDistance(limit) => {
                self.matching_step(state, MatchPolicy::EditDistance(limit))
                    .await
            }
            _ => self.confidence_step(state).await,
        }
    }

    async fn confidence_step(&self, state: &AgentContext) -> Result<Step, OrchestratorError> {
        let drafter = Drafter {
            backend: self.backend.as_ref(),
            params: self.params.clone(),
        };
        let pair = drafter.draft_pair(state).await;
        let draft_slm_ms = pair.slm_ms();
        let draft_llm_ms = pair.llm_ms();
        let draft_wall = pair.wall_ms();

        let draft = match select_draft(&pair, &self.selection) {
            Ok(d) => d.clone(),
            Err(SpeculationError::BothDraftsFailed { .. }) => {
                // Direct fallback: no critic call is spent on a step with
                // nothing to verify.
                let verdict = synthetic_verdict(false);
                return self
                    .fallback_step(state, verdict, draft_slm_ms, draft_llm_ms, draft_wall, 0)
                    .await;
            }
            Err(SpeculationError::InvalidPolicy) => {
                return Err(OrchestratorError::InvalidConfig("tau_think must be >= 1"))
            }
        };

        let (verdict, verify_ms, prefetched) = match self.config.verifier_policy {
            VerifierPolicy::AlwaysAccept => (synthetic_verdict(true), 0, None),
            VerifierPolicy::AlwaysReject => (synthetic_verdict(false), 0, None),
            VerifierPolicy::Semantic => self.semantic_verdict(state, &draft).await?,
            _ => unreachable!("matching policies handled in matching_step"),
        };

        if verdict.accepted {
            let observation = match prefetched {
                Some(result) => observation_or_error(result),
                None => observation_or_error(self.tools.execute(&draft.action).await),
            };
            let tool_ms = observation.latency_ms;
            let verify_and_tool = if self.config.prefetch {
                verify_ms.max(tool_ms)
            } else {
                verify_ms + tool_ms
            };
            let step = Step {
                reasoning: draft.reasoning,
                provenance: match draft.source {
                    DraftSource::System2 => Provenance::System2Draft,
                    DraftSource::System1 => Provenance::System1Draft,
                },
                verdict: Some(verdict),
                timing: TimingBreakdown {
                    draft_slm_ms,
                    draft_llm_ms,
                    verify_ms,
                    tool_ms,
                    fallback_reasoning_ms: 0,
                    wall_step_ms: draft_wall + verify_and_tool,
                },
                action: draft.action,
                observation,
                action_logprobs: draft.action_logprobs,
            };
            step.validate()?;
            Ok(step)
        } else {
            self.fallback_step(
                state,
                verdict,
                draft_slm_ms,
                draft_llm_ms,
                draft_wall,
                verify_ms,
            )
            .await
        }
    }

    /// Critic pass, optionally overlapped with speculative tool execution.
    /// The prefetched result is discarded (and the in-flight call dropped)
    /// when the verdict rejects.
    async fn semantic_verdict(
        &self,
        state: &AgentContext,
        draft: &Draft,
    ) -> Result<(Verdict, u64, Option<Result<Observation, ToolError>>), OrchestratorError> {
        if !self.config.prefetch {
            let timed = self
                .verifier
                .verify(
                    self.backend.as_ref(),
                    state,
                    draft.reasoning.as_ref(),
                    &draft.action,
                    self.config.tau,
                )
                .await?;
            return Ok((timed.value, timed.latency_ms, None));
        }

        let tool_fut = Box::pin(self.tools.execute(&draft.action));
        let verify_fut = Box::pin(self.verifier.verify(
            self.backend.as_ref(),
            state,
            draft.reasoning.as_ref(),
            &draft.action,
            self.config.tau,
        ));
        match select(tool_fut, verify_fut).await {
            Either::Left((tool_result, verify_rest)) => {
                let timed = verify_rest.await?;
                let keep = timed.value.accepted;
                Ok((timed.value, timed.latency_ms, keep.then_some(tool_result)))
            }
            Either::Right((verdict_result, tool_rest)) => {
                let timed = verdict_result?;
                if timed.value.accepted {
                    let tool_result = tool_rest.await;
                    Ok((timed.value, timed.latency_ms, Some(tool_result)))
                } else {
                    drop(tool_rest);
                    Ok((timed.value, timed.latency_ms, None))
                }
            }
        }
    }

    /// Regenerates the step with the full-capacity model and executes its
    /// action.
    async fn fallback_step(
        &self,
        state: &AgentContext,
        verdict: Verdict,
        draft_slm_ms: u64,
        draft_llm_ms: u64,
        draft_wall: u64,
        verify_ms: u64,
    ) -> Result<Step, OrchestratorError> {
        let prompt = state.render_generation_prompt();
        let raw = self
            .backend
            .generate(
                Role::Llm,
                &prompt,
                GenerationMode::WithReasoning,
                &self.params,
            )
            .await?;
        let fallback_reasoning_ms = raw.latency_ms;
        let regenerated = Draft::from_response(DraftSource::System2, raw)
            .map_err(|f| OrchestratorError::MalformedCompletion(f.error))?;
        let observation = observation_or_error(self.tools.execute(&regenerated.action).await);
        let tool_ms = observation.latency_ms;
        let step = Step {
            reasoning: regenerated.reasoning,
            action: regenerated.action,
            observation,
            provenance: Provenance::Fallback,
            verdict: Some(verdict),
            timing: TimingBreakdown {
                draft_slm_ms,
                draft_llm_ms,
                verify_ms,
                tool_ms,
                fallback_reasoning_ms,
                wall_step_ms: draft_wall + verify_ms + fallback_reasoning_ms + tool_ms,
            },
            action_logprobs: regenerated.action_logprobs,
        };
        step.validate()?;
        Ok(step)
    }

    /// Prior-work matching step: base model reasons concurrently with
    /// draft execution; the speculative observation is reused on match and
    /// the base action executed on mismatch.
    async fn matching_step(
        &self,
        state: &AgentContext,
        policy: MatchPolicy,
    ) -> Result<Step, OrchestratorError> {
        let prompt = state.render_generation_prompt();
        let base_fut = self.backend.generate(
            Role::Llm,
            &prompt,
            GenerationMode::WithReasoning,
            &self.params,
        );
        let draft_fut = async {
            let drafter = Drafter {
                backend: self.backend.as_ref(),
                params: self.params.clone(),
            };
            let pair = drafter.draft_pair(state).await;
            let selected = select_draft(&pair, &self.selection).cloned();
            let speculative = match &selected {
                Ok(d) => Some(self.tools.execute(&d.action).await),
                Err(_) => None,
            };
            (
                pair.slm_ms(),
                pair.llm_ms(),
                pair.wall_ms(),
                selected,
                speculative,
            )
        };
        let ((draft_slm_ms, draft_llm_ms, draft_wall, selected, speculative), base_raw) =
            join!(draft_fut, base_fut);

        let base_raw = base_raw?;
        let verify_ms = base_raw.latency_ms;
        let base = Draft::from_response(DraftSource::System2, base_raw)
            .map_err(|f| OrchestratorError::MalformedCompletion(f.error))?;

        if let Ok(draft) = selected {
            if match_verify(&draft.action, &base.action, policy) {
                let observation =
                    observation_or_error(speculative.expect("selected draft was executed"));
                let tool_ms = observation.latency_ms;
                let step = Step {
                    reasoning: draft.reasoning,
                    provenance: match draft.source {
                        DraftSource::System2 => Provenance::System2Draft,
                        DraftSource::System1 => Provenance::System1Draft,
                    },
                    verdict: Some(synthetic_verdict(true)),
                    timing: TimingBreakdown {
                        draft_slm_ms,
                        draft_llm_ms,
                        verify_ms,
                        tool_ms,
                        fallback_reasoning_ms: 0,
                        wall_step_ms: (draft_wall + tool_ms).max(verify_ms),
                    },
                    action: draft.action,
                    observation,
                    action_logprobs: draft.action_logprobs,
                };
                step.validate()?;
                return Ok(step);
            }
        }

        // Mismatch (or no draft): the base action is the step.
        let discarded_tool_ms = speculative
            .as_ref()
            .and_then(|r| r.as_ref().ok().map(|o| o.latency_ms))
            .unwrap_or(0);
        let observation = observation_or_error(self.tools.execute(&base.action).await);
        let tool_ms = observation.latency_ms;
        let step = Step {
            reasoning: base.reasoning,
            action: base.action,
            observation,
            provenance: Provenance::Fallback,
            verdict: Some(synthetic_verdict(false)),
            timing: TimingBreakdown {
                draft_slm_ms,
                draft_llm_ms,
                verify_ms,
                tool_ms,
                fallback_reasoning_ms: 0,
                wall_step_ms: (draft_wall + discarded_tool_ms).max(verify_ms) + tool_ms,
            },
            action_logprobs: base.action_logprobs,
        };
        step.validate()?;
        Ok(step)
    }

    /// One baseline iteration: full-capacity reasoning, direct execution.
    async fn baseline_step(&self, state: &AgentContext) -> Result<Step, OrchestratorError> {
        let prompt = state.render_generation_prompt();
        let raw = self
            .backend
            .generate(
                Role::Llm,
                &prompt,
                GenerationMode::WithReasoning,
                &self.params,
            )
            .await?;
        let reasoning_ms = raw.latency_ms;
        let parsed = Draft::from_response(DraftSource::System2, raw)
            .map_err(|f| OrchestratorError::MalformedCompletion(f.error))?;
        let observation = observation_or_error(self.tools.execute(&parsed.action).await);
        let tool_ms = observation.latency_ms;
        let step = Step {
            reasoning: parsed.reasoning,
            action: parsed.action,
            observation,
            // The baseline is the always-fallback loop: every step is
            // full-capacity reasoning with no accepted draft.
            provenance: Provenance::Fallback,
            verdict: Some(synthetic_verdict(false)),
            timing: TimingBreakdown {
                draft_slm_ms: 0,
                draft_llm_ms: 0,
                verify_ms: 0,
                tool_ms,
                fallback_reasoning_ms: reasoning_ms,
                wall_step_ms: reasoning_ms + tool_ms,
            },
            action_logprobs: parsed.action_logprobs,
        };
        step.validate()?;
        Ok(step)
    }
}

/// Degenerate verdict for policies that do not produce critic
/// probabilities (always-accept/reject, matching modes, draft failures).
/// Probabilities sit at the floor/ceiling so the score-threshold invariant
/// holds structurally.
fn synthetic_verdict(accepted: bool) -> Verdict {
    let (p_acc, p_rej) = if accepted {
        (1.0, DEFAULT_EPSILON)
    } else {
        (DEFAULT_EPSILON, 1.0)
    };
    Verdict::from_probabilities(p_acc, p_rej, 0.0).expect("floored probabilities are in domain")
}

fn observation_or_error(result: Result<Observation, ToolError>) -> Observation {
    result.unwrap_or_else(|e| Observation {
        kind: ObservationKind::ToolError,
        payload: e.to_string(),
        latency_ms: 0,
    })
}
