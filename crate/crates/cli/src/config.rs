//! TOML config file: per-command sections plus flag overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use specrun_core::backends::WireConfig;
use specrun_core::orchestrator::{RunConfig, VerifierPolicy};
use specrun_core::simulator::SimParams;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub version: u32,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub backends: BackendsSection,
    #[serde(default)]
    pub simulate: Option<SimParams>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub question: Option<String>,
    pub task_id: Option<String>,
    pub scenario: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
    pub tau: Option<f64>,
    pub tau_think: Option<usize>,
    pub max_steps: Option<usize>,
    pub policy: Option<String>,
    pub prefetch: Option<bool>,
    pub seed: Option<u64>,
    pub window: Option<usize>,
    pub observation_cap: Option<usize>,
    pub temperature: Option<f64>,
    pub tasks: Vec<TaskSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub task_id: String,
    pub question: String,
    pub scenario: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendsSection {
    /// "scripted" (default) or "wire".
    pub mode: String,
    pub slm: Option<WireSection>,
    pub llm: Option<WireSection>,
    pub critic: Option<WireSection>,
}

impl Default for BackendsSection {
    fn default() -> Self {
        BackendsSection {
            mode: "scripted".to_string(),
            slm: None,
            llm: None,
            critic: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireSection {
    pub base_url: String,
    pub model: String,
    pub auth_env: Option<String>,
    pub timeout_ms: Option<u64>,
    pub reasoning_directive: Option<String>,
    pub action_only_directive: Option<String>,
}

impl From<WireSection> for WireConfig {
    fn from(section: WireSection) -> WireConfig {
        let defaults = WireConfig::default();
        WireConfig {
            base_url: section.base_url,
            model: section.model,
            auth_env: section.auth_env,
            timeout_ms: section.timeout_ms.unwrap_or(defaults.timeout_ms),
            reasoning_directive: section
                .reasoning_directive
                .unwrap_or(defaults.reasoning_directive),
            action_only_directive: section
                .action_only_directive
                .unwrap_or(defaults.action_only_directive),
        }
    }
}

/// Flag overrides; they win over config-file values.
#[derive(Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tau: Option<f64>,
    pub tau_think: Option<usize>,
    pub policy: Option<String>,
    pub prefetch: Option<bool>,
}

/// One fully resolved task to run.
#[derive(Debug, Clone)]
pub struct ResolvedTask {
    pub task_id: String,
    pub question: String,
    pub scenario: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ConfigFile =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if config.version != 1 {
            bail!("unsupported config version {} (expected 1)", config.version);
        }
        Ok(config)
    }

    /// Builds the orchestrator config from `[run]` plus flag overrides.
    pub fn run_config(&self, overrides: &Overrides) -> Result<RunConfig> {
        let defaults = RunConfig::default();
        let policy_text = overrides.policy.clone().or_else(|| self.run.policy.clone());
        let verifier_policy = match policy_text {
            Some(text) => parse_policy(&text)?,
            None => defaults.verifier_policy,
        };
        Ok(RunConfig {
            tau: overrides.tau.or(self.run.tau).unwrap_or(defaults.tau),
            tau_think: overrides
                .tau_think
                .or(self.run.tau_think)
                .unwrap_or(defaults.tau_think),
            max_steps: self.run.max_steps.unwrap_or(defaults.max_steps),
            verifier_policy,
            prefetch: overrides
                .prefetch
                .or(self.run.prefetch)
                .unwrap_or(defaults.prefetch),
            seed: overrides.seed.or(self.run.seed).unwrap_or(defaults.seed),
            window: self.run.window.unwrap_or(defaults.window),
            observation_cap: self.run.observation_cap.unwrap_or(defaults.observation_cap),
            temperature: self.run.temperature.unwrap_or(defaults.temperature),
        })
    }

    /// The task list: `[[run.tasks]]` when present, otherwise the single
    /// task described by `[run]` and the path flags.
    pub fn resolve_tasks(
        &self,
        scenario_flag: Option<&Path>,
        fixtures_flag: Option<&Path>,
        trace_out_flag: Option<&Path>,
    ) -> Result<Vec<ResolvedTask>> {
        if !self.run.tasks.is_empty() {
            return Ok(self
                .run
                .tasks
                .iter()
                .map(|t| ResolvedTask {
                    task_id: t.task_id.clone(),
                    question: t.question.clone(),
                    scenario: t.scenario.clone().or_else(|| self.run.scenario.clone()),
                    fixtures: t.fixtures.clone().or_else(|| self.run.fixtures.clone()),
                    trace_out: t.trace_out.clone(),
                })
                .collect());
        }
        let question = self
            .run
            .question
            .clone()
            .context("[run].question missing (and no [[run.tasks]] given)")?;
        Ok(vec![ResolvedTask {
            task_id: self
                .run
                .task_id
                .clone()
                .unwrap_or_else(|| "task-0".to_string()),
            question,
            scenario: scenario_flag
                .map(Path::to_path_buf)
                .or_else(|| self.run.scenario.clone()),
            fixtures: fixtures_flag
                .map(Path::to_path_buf)
                .or_else(|| self.run.fixtures.clone()),
            trace_out: trace_out_flag
                .map(Path::to_path_buf)
                .or_else(|| self.run.trace_out.clone()),
        }])
    }
}

/// semantic | exact | edit:<limit> | always-accept | always-reject
pub fn parse_policy(text: &str) -> Result<VerifierPolicy> {
    let normalized = text.trim().to_lowercase();
    if let Some(limit) = normalized.strip_prefix("edit:") {
        let limit: usize = limit
            .parse()
            .with_context(|| format!("invalid edit-distance limit in `{text}`"))?;
        return Ok(VerifierPolicy::EditDistance(limit));
    }
    match normalized.as_str() {
        "semantic" => Ok(VerifierPolicy::Semantic),
        "exact" => Ok(VerifierPolicy::Exact),
        "always-accept" => Ok(VerifierPolicy::AlwaysAccept),
        "always-reject" => Ok(VerifierPolicy::AlwaysReject),
        other => bail!("unknown verifier policy `{other}`"),
    }
}
