//! Tool execution for Search and Visit actions.
//!
//! A [`ToolExecutor`] fronts a pluggable [`ToolBackend`] with result
//! caching keyed by the canonical rendered action. The cache never changes
//! observable results, only the recorded latency (0 on hit) and the number
//! of backend calls.

pub mod fixture;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::action::{render_action, Action};
use crate::trajectory::{Observation, ObservationKind};
use crate::Timed;

pub use fixture::{load_fixtures, FixtureError, FixtureSet, FixtureToolBackend};

/// Search engine results for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResults {
    pub items: Vec<SearchItem>,
    pub query_echo: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchItem {
    pub url: String,
    pub title: String,
    pub snippet: String,
}

/// Content extracted from one visited page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub url: String,
    pub instruction_echo: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToolError {
    #[error("tool timed out after {0} ms")]
    Timeout(u64),
    #[error("no fixture for key `{0}`")]
    NoFixture(String),
    #[error("wire error: {0}")]
    Wire(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Limits applied by the executor regardless of backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolConfig {
    pub max_results: usize,
    /// Cap on extraction content, in characters.
    pub content_cap: usize,
    pub cache_capacity: usize,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            max_results: 10,
            content_cap: 8192,
            cache_capacity: 1024,
        }
    }
}

const TRUNCATION_MARKER: &str = "…[truncated]";

/// Raw tool transport: fixture files for desk-scale runs, HTTP services in
/// production deployments.
#[async_trait::async_trait]
pub trait ToolBackend: Send + Sync {
    async fn search(&self, query: &str) -> Result<Timed<SearchResults>, ToolError>;
    async fn visit(&self, url: &str, instruction: &str) -> Result<Timed<Extraction>, ToolError>;
    async fn other(
        &self,
        tool: &str,
        args: &BTreeMap<String, String>,
    ) -> Result<Timed<String>, ToolError>;
}

#[derive(Debug, Clone, PartialEq)]
enum CachedResult {
    Search(SearchResults),
    Visit(Extraction),
    Other(String),
}

/// Least-recently-used map from rendered action to tool result.
struct LruCache {
    capacity: usize,
    entries: HashMap<String, (CachedResult, u64)>,
    tick: u64,
}

impl LruCache {
    fn new(capacity: usize) -> Self {
        LruCache {
            capacity,
            entries: HashMap::new(),
            tick: 0,
        }
    }

    fn get(&mut self, key: &str) -> Option<CachedResult> {
        self.tick += 1;
        let tick = self.tick;
        self.entries.get_mut(key).map(|slot| {
            slot.1 = tick;
            slot.0.clone()
        })
    }

    fn put(&mut self, key: String, value: CachedResult) {
        if self.capacity == 0 {
            return;
        }
        self.tick += 1;
        if self.entries.len() >= self.capacity && !self.entries.contains_key(&key) {
            if let Some(oldest) = self
                .entries
                .iter()
                .min_by_key(|(_, (_, t))| *t)
                .map(|(k, _)| k.clone())
            {
                self.entries.remove(&oldest);
            }
        }
        self.entries.insert(key, (value, self.tick));
    }
}

/// Validating, caching front end over a [`ToolBackend`].
pub struct ToolExecutor {
    backend: Arc<dyn ToolBackend>,
    config: ToolConfig,
    cache: Mutex<LruCache>,
}

impl ToolExecutor {
    pub fn new(backend: Arc<dyn ToolBackend>, config: ToolConfig) -> Self {
        let cache = Mutex::new(LruCache::new(config.cache_capacity));
        ToolExecutor {
            backend,
            config,
            cache,
        }
    }

    pub fn config(&self) -> &ToolConfig {
        &self.config
    }

    /// Runs a search, serving repeats from the cache with zero latency.
    pub async fn execute_search(&self, query: &str) -> Result<Timed<SearchResults>, ToolError> {
        if query.is_empty() {
            return Err(ToolError::InvalidInput("empty query".to_string()));
        }
        let key = render_action(&Action::Search {
            query: query.to_string(),
        });
        if let Some(CachedResult::Search(hit)) = self.cache.lock().unwrap().get(&key) {
            return Ok(Timed {
                value: hit,
                latency_ms: 0,
            });
        }
        let mut reply = self.backend.search(query).await?;
        reply.value.items.truncate(self.config.max_results);
        self.cache
            .lock()
            .unwrap()
            .put(key, CachedResult::Search(reply.value.clone()));
        Ok(reply)
    }

    /// Visits a URL, truncating content to the configured cap.
    pub async fn execute_visit(
        &self,
        url: &str,
        instruction: &str,
    ) -> Result<Timed<Extraction>, ToolError> {
        if instruction.is_empty() {
            return Err(ToolError::InvalidInput("empty instruction".to_string()));
        }
        if !is_valid_url(url) {
            return Err(ToolError::InvalidInput(format!("malformed url `{url}`")));
        }
        let key = render_action(&Action::Visit {
            url: url.to_string(),
            instruction: instruction.to_string(),
        });
        if let Some(CachedResult::Visit(hit)) = self.cache.lock().unwrap().get(&key) {
            return Ok(Timed {
                value: hit,
                latency_ms: 0,
            });
        }
        let mut reply = self.backend.visit(url, instruction).await?;
        reply.value.content = truncate_content(&reply.value.content, self.config.content_cap);
        self.cache
            .lock()
            .unwrap()
            .put(key, CachedResult::Visit(reply.value.clone()));
        Ok(reply)
    }

    pub async fn execute_other(
        &self,
        tool: &str,
        args: &BTreeMap<String, String>,
    ) -> Result<Timed<String>, ToolError> {
        let key = render_action(&Action::Other {
            tool: tool.to_string(),
            args: args.clone(),
        });
        if let Some(CachedResult::Other(hit)) = self.cache.lock().unwrap().get(&key) {
            return Ok(Timed {
                value: hit,
                latency_ms: 0,
            });
        }
        let reply = self.backend.other(tool, args).await?;
        self.cache
            .lock()
            .unwrap()
            .put(key, CachedResult::Other(reply.value.clone()));
        Ok(reply)
    }

    /// Executes any action and packages the result as an [`Observation`].
    /// Finish actions echo the answer without touching the backend.
    pub async fn execute(&self, action: &Action) -> Result<Observation, ToolError> {
        match action {
            Action::Search { query } => {
                let reply = self.execute_search(query).await?;
                Ok(Observation {
                    kind: ObservationKind::SearchResults,
                    payload: serde_json::to_string(&reply.value).expect("search results serialize"),
                    latency_ms: reply.latency_ms,
                })
            }
            Action::Visit { url, instruction } => {
                let reply = self.execute_visit(url, instruction).await?;
                Ok(Observation {
                    kind: ObservationKind::Extraction,
                    payload: serde_json::to_string(&reply.value).expect("extraction serializes"),
                    latency_ms: reply.latency_ms,
                })
            }
            Action::Finish { answer } => Ok(Observation {
                kind: ObservationKind::AnswerEcho,
                payload: answer.clone(),
                latency_ms: 0,
            }),
            Action::Other { tool, args } => {
                let reply = self.execute_other(tool, args).await?;
                Ok(Observation {
                    kind: ObservationKind::ToolOutput,
                    payload: reply.value,
                    latency_ms: reply.latency_ms,
                })
            }
        }
    }
}

/// Minimal absolute-URL check: a known scheme, `://`, and a non-empty host.
fn is_valid_url(url: &str) -> bool {
    let rest = match url.split_once("://") {
        Some(("http" | "https" | "file", rest)) => rest,
        _ => return false,
    };
    let host = rest.split(['/', '?', '#']).next().unwrap_or("");
    !host.is_empty() && !host.contains(char::is_whitespace)
}

fn truncate_content(content: &str, cap: usize) -> String {
    let char_count = content.chars().count();
    if char_count <= cap {
        return content.to_string();
    }
    let marker_len = TRUNCATION_MARKER.chars().count();
    let keep = cap.saturating_sub(marker_len);
    let mut out: String = content.chars().take(keep).collect();
    out.push_str(TRUNCATION_MARKER);
    out
}
