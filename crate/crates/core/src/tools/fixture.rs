//! Deterministic tool fixtures: search results keyed by exact query text,
//! page content keyed by URL.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Deserialize;

use super::{Extraction, SearchItem, SearchResults, ToolBackend, ToolError};
use crate::Timed;

/// Parsed fixture file contents.
#[derive(Debug, Clone, Default)]
pub struct FixtureSet {
    search: HashMap<String, (Vec<SearchItem>, u64)>,
    visit: HashMap<String, (String, u64)>,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported fixture version {0} (expected 1)")]
    Version(u32),
    #[error("duplicate fixture key `{0}`")]
    Duplicate(String),
    #[error("invalid fixture `{key}`: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureDoc {
    version: u32,
    #[serde(default)]
    search: Vec<SearchFixture>,
    #[serde(default)]
    visit: Vec<VisitFixture>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchFixture {
    query: String,
    #[serde(default)]
    latency_ms: u64,
    items: Vec<SearchItem>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VisitFixture {
    url: String,
    #[serde(default)]
    latency_ms: u64,
    content: String,
}

/// Parses and validates a fixture document.
pub fn load_fixtures(document: &str) -> Result<FixtureSet, FixtureError> {
    let doc: FixtureDoc = serde_json::from_str(document).map_err(|e| FixtureError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.version != 1 {
        return Err(FixtureError::Version(doc.version));
    }
    let mut set = FixtureSet::default();
    for entry in doc.search {
        if entry.items.iter().any(|i| i.url.is_empty()) {
            return Err(FixtureError::Invalid {
                key: entry.query,
                message: "search item with empty url".to_string(),
            });
        }
        if set
            .search
            .insert(entry.query.clone(), (entry.items, entry.latency_ms))
            .is_some()
        {
            return Err(FixtureError::Duplicate(entry.query));
        }
    }
    for entry in doc.visit {
        if set
            .visit
            .insert(entry.url.clone(), (entry.content, entry.latency_ms))
            .is_some()
        {
            return Err(FixtureError::Duplicate(entry.url));
        }
    }
    Ok(set)
}

/// Pure scripted [`ToolBackend`]: same key, same result, no ordering
/// effects. Call counters let tests assert how often the backend was hit
/// (including prefetched calls whose results were discarded).
pub struct FixtureToolBackend {
    fixtures: FixtureSet,
    search_calls: AtomicUsize,
    visit_calls: AtomicUsize,
    other_calls: AtomicUsize,
}

impl FixtureToolBackend {
    pub fn new(fixtures: FixtureSet) -> Self {
        FixtureToolBackend {
            fixtures,
            search_calls: AtomicUsize::new(0),
            visit_calls: AtomicUsize::new(0),
            other_calls: AtomicUsize::new(0),
        }
    }

    pub fn search_calls(&self) -> usize {
        self.search_calls.load(Ordering::SeqCst)
    }

    pub fn visit_calls(&self) -> usize {
        self.visit_calls.load(Ordering::SeqCst)
    }

    pub fn other_calls(&self) -> usize {
        self.other_calls.load(Ordering::SeqCst)
    }

    pub fn total_calls(&self) -> usize {
        self.search_calls() + self.visit_calls() + self.other_calls()
    }
}

#[async_trait::async_trait]
impl ToolBackend for FixtureToolBackend {
    async fn search(&self, query: &str) -> Result<Timed<SearchResults>, ToolError> {
        self.search_calls.fetch_add(1, Ordering::SeqCst);
        match self.fixtures.search.get(query) {
            Some((items, latency_ms)) => Ok(Timed {
                value: SearchResults {
                    items: items.clone(),
                    query_echo: query.to_string(),
                },
                latency_ms: *latency_ms,
            }),
            None => Err(ToolError::NoFixture(format!("search:{query}"))),
        }
    }

    async fn visit(&self, url: &str, instruction: &str) -> Result<Timed<Extraction>, ToolError> {
        self.visit_calls.fetch_add(1, Ordering::SeqCst);
        match self.fixtures.visit.get(url) {
            Some((content, latency_ms)) => Ok(Timed {
                value: Extraction {
                    url: url.to_string(),
                    instruction_echo: instruction.to_string(),
                    content: content.clone(),
                },
                latency_ms: *latency_ms,
            }),
            None => Err(ToolError::NoFixture(format!("visit:{url}"))),
        }
    }

    async fn other(
        &self,
        tool: &str,
        _args: &BTreeMap<String, String>,
    ) -> Result<Timed<String>, ToolError> {
        self.other_calls.fetch_add(1, Ordering::SeqCst);
        Err(ToolError::NoFixture(format!("other:{tool}")))
    }
}

#[cfg(test)]
pub mod tests_support {
    use super::*;

    pub const FIXTURE_DOC: &str = r#"{
  "version": 1,
  "search": [
    {
      "query": "capital of France",
      "latency_ms": 200,
      "items": [
        {"url": "http://a", "title": "Paris", "snippet": "Paris is the capital of France."},
        {"url": "http://b", "title": "France", "snippet": "France, officially the French Republic."},
        {"url": "http://c", "title": "Capitals", "snippet": "List of world capitals."}
      ]
    }
  ],
  "visit": [
    {"url": "http://a", "latency_ms": 150, "content": "Paris was founded in the 3rd century BC."}
  ]
}"#;

    pub fn fixture_backend() -> FixtureToolBackend {
        FixtureToolBackend::new(load_fixtures(FIXTURE_DOC).unwrap())
    }
}
