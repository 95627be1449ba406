//! Deterministic scripted backend for tests and desk-scale runs.
//!
//! Calls never sleep: the scripted latency is reported in the response and
//! the orchestrator composes wall times from it. Identical script plus
//! identical call sequence yields identical responses on every run and
//! platform.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::scenario::{ScenarioScript, ScriptedEntry};
use super::{
    check_generate_preconditions, check_judge_preconditions, BackendError, BackendResponse,
    DecodingParams, GenerationMode, ModelBackend, NextTokenDistribution, Role,
};
use crate::Timed;

/// Scripted [`ModelBackend`] that replays a [`ScenarioScript`].
///
/// The N-th `generate` call for a given (role, mode) resolves against
/// scripted step N, and the N-th judge call per role against its scripted
/// step N. Bookkeeping is serialized behind a lock so concurrent calls with
/// distinct keys stay deterministic.
pub struct ScriptedBackend {
    script: Arc<ScenarioScript>,
    cursors: Mutex<HashMap<(Role, Option<GenerationMode>), usize>>,
    generate_calls: Mutex<HashMap<(Role, GenerationMode), usize>>,
    judge_calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(script: Arc<ScenarioScript>) -> Self {
        ScriptedBackend {
            script,
            cursors: Mutex::new(HashMap::new()),
            generate_calls: Mutex::new(HashMap::new()),
            judge_calls: AtomicUsize::new(0),
        }
    }

    fn next_step(&self, role: Role, mode: Option<GenerationMode>) -> usize {
        let mut cursors = self.cursors.lock().unwrap();
        let cursor = cursors.entry((role, mode)).or_insert(0);
        let step = *cursor;
        *cursor += 1;
        step
    }

    /// How many `generate` calls have been issued for (role, mode).
    pub fn generate_calls(&self, role: Role, mode: GenerationMode) -> usize {
        *self
            .generate_calls
            .lock()
            .unwrap()
            .get(&(role, mode))
            .unwrap_or(&0)
    }

    /// How many judge calls have been issued across roles.
    pub fn judge_calls(&self) -> usize {
        self.judge_calls.load(Ordering::SeqCst)
    }
}

#[async_trait::async_trait]
impl ModelBackend for ScriptedBackend {
    async fn generate(
        &self,
        role: Role,
        context: &str,
        mode: GenerationMode,
        params: &DecodingParams,
    ) -> Result<BackendResponse, BackendError> {
        check_generate_preconditions(context, params)?;
        *self
            .generate_calls
            .lock()
            .unwrap()
            .entry((role, mode))
            .or_insert(0) += 1;
        let step = self.next_step(role, Some(mode));
        match self.script.get(&(role, step, Some(mode))) {
            Some(ScriptedEntry::Response(response)) => Ok(response.clone()),
            Some(ScriptedEntry::TopK { .. }) | None => Err(BackendError::Malformed(format!(
                "no scripted response for (role={role:?}, step={step}, mode={mode:?})"
            ))),
        }
    }

    async fn judge_next_token(
        &self,
        role: Role,
        prompt: &str,
        k: usize,
    ) -> Result<Timed<NextTokenDistribution>, BackendError> {
        check_judge_preconditions(k)?;
        if prompt.is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".to_string()));
        }
        self.judge_calls.fetch_add(1, Ordering::SeqCst);
        let step = self.next_step(role, None);
        match self.script.get(&(role, step, None)) {
            // Scripts are trusted fixtures: the scripted distribution is
            // returned verbatim, whatever its width.
            Some(ScriptedEntry::TopK {
                distribution,
                latency_ms,
            }) => Ok(Timed::new(distribution.clone(), *latency_ms)),
            Some(ScriptedEntry::Response(_)) | None => Err(BackendError::Malformed(format!(
                "no scripted top-k for (role={role:?}, step={step})"
            ))),
        }
    }
}
