//! Scenario files: deterministic scripts for backend responses.
//!
//! A scenario is a versioned JSON document:
//!
//! ```json
//! {
//!   "version": 1,
//!   "entries": [
//!     {"role": "slm", "step": 0, "mode": "with_reasoning",
//!      "text": "...\nsearch{query=\"x\"}",
//!      "tokens": ["a", "b"], "logprobs": [-0.1, -0.2], "latency_ms": 300},
//!     {"role": "critic", "step": 0,
//!      "topk": [["Yes", -0.105360], ["No", -2.302585]], "latency_ms": 40}
//!   ]
//! }
//! ```
//!
//! Entries carrying `text` script a generation; entries carrying `topk`
//! script a critic judgment and must omit `mode`. `step` is the ordinal of
//! that call class on the backend: the scripted backend resolves the N-th
//! `generate` call for a given (role, mode) against step N, and likewise
//! the N-th judge call per role. Unknown fields are rejected.

use std::collections::HashMap;

use serde::Deserialize;

use super::{
    BackendError, BackendResponse, FinishReason, GenerationMode, NextTokenDistribution, Role,
};

/// Lookup key for scripted entries: `mode` is `None` for judge entries.
pub type ScriptKey = (Role, usize, Option<GenerationMode>);

/// One scripted backend behavior.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptedEntry {
    Response(BackendResponse),
    TopK {
        distribution: NextTokenDistribution,
        latency_ms: u64,
    },
}

/// Fully materialized scenario script.
#[derive(Debug, Clone, Default)]
pub struct ScenarioScript {
    entries: HashMap<ScriptKey, ScriptedEntry>,
}

impl ScenarioScript {
    pub fn get(&self, key: &ScriptKey) -> Option<&ScriptedEntry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Errors from [`load_scenario`].
#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported scenario version {0} (expected 1)")]
    Version(u32),
    #[error("duplicate scripted key (role={role:?}, step={step}, mode={mode:?})")]
    DuplicateKey {
        role: Role,
        step: usize,
        mode: Option<GenerationMode>,
    },
    #[error("entry {index}: {message}")]
    Entry { index: usize, message: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    version: u32,
    entries: Vec<EntryDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    role: Role,
    step: usize,
    #[serde(default)]
    mode: Option<GenerationMode>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    tokens: Option<Vec<String>>,
    #[serde(default)]
    logprobs: Option<Vec<f64>>,
    #[serde(default)]
    topk: Option<Vec<(String, f64)>>,
    #[serde(default)]
    latency_ms: u64,
}

/// Parses and validates a scenario document.
pub fn load_scenario(document: &str) -> Result<ScenarioScript, ScenarioError> {
    let doc: ScenarioDoc = serde_json::from_str(document).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.version != 1 {
        return Err(ScenarioError::Version(doc.version));
    }

    let mut entries = HashMap::new();
    for (index, entry) in doc.entries.into_iter().enumerate() {
        let err = |message: String| ScenarioError::Entry { index, message };
        let (key, scripted) = match (entry.text, entry.topk) {
            (Some(text), None) => {
                let mode = entry
                    .mode
                    .ok_or_else(|| err("generation entry requires `mode`".to_string()))?;
                let response = BackendResponse {
                    text,
                    tokens: entry.tokens.unwrap_or_default(),
                    token_logprobs: entry.logprobs.unwrap_or_default(),
                    finish_reason: FinishReason::Stop,
                    latency_ms: entry.latency_ms,
                };
                response.validate().map_err(|e| err(e.to_string()))?;
                (
                    (entry.role, entry.step, Some(mode)),
                    ScriptedEntry::Response(response),
                )
            }
            (None, Some(topk)) => {
                if entry.mode.is_some() {
                    return Err(err("top-k entry must omit `mode`".to_string()));
                }
                if entry.tokens.is_some() || entry.logprobs.is_some() {
                    return Err(err("top-k entry must omit tokens/logprobs".to_string()));
                }
                let distribution =
                    NextTokenDistribution::new(topk).map_err(|e| err(e.to_string()))?;
                (
                    (entry.role, entry.step, None),
                    ScriptedEntry::TopK {
                        distribution,
                        latency_ms: entry.latency_ms,
                    },
                )
            }
            (Some(_), Some(_)) => {
                return Err(err("entry carries both `text` and `topk`".to_string()))
            }
            (None, None) => return Err(err("entry carries neither `text` nor `topk`".to_string())),
        };
        if entries.contains_key(&key) {
            return Err(ScenarioError::DuplicateKey {
                role: key.0,
                step: key.1,
                mode: key.2,
            });
        }
        entries.insert(key, scripted);
    }
    Ok(ScenarioScript { entries })
}

impl From<BackendError> for ScenarioError {
    fn from(e: BackendError) -> Self {
        ScenarioError::Entry {
            index: 0,
            message: e.to_string(),
        }
    }
}
